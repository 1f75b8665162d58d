#include "tomcoord/worlds/navigation.hpp"

#include <algorithm>
#include <deque>
#include <limits>

namespace tomcoord::worlds {

namespace {

constexpr int kDoors[4][2] = {{4, 2}, {4, 6}, {2, 4}, {6, 4}};
constexpr int kDx[4] = {0, 0, 1, -1};
constexpr int kDy[4] = {-1, 1, 0, 0};

bool is_door(int x, int y) {
  for (const auto& d : kDoors) {
    if (d[0] == x && d[1] == y) return true;
  }
  return false;
}

using DistTable = std::array<std::array<int, kNumCells>, kNumCells>;

const DistTable& distances() {
  static const DistTable table = [] {
    DistTable t{};
    for (int s = 0; s < kNumCells; ++s) {
      t[s].fill(std::numeric_limits<int>::max() / 4);
      if (is_wall(s)) continue;
      std::deque<int> q{s};
      t[s][s] = 0;
      while (!q.empty()) {
        const int c = q.front();
        q.pop_front();
        for (int m = 0; m < 4; ++m) {
          const int n = neighbour(c, m);
          if (n >= 0 && t[s][n] > t[s][c] + 1) {
            t[s][n] = t[s][c] + 1;
            q.push_back(n);
          }
        }
      }
    }
    return t;
  }();
  return table;
}

int entity_at(const GridWorld& w, int cell, int first, int last) {
  for (int e = first; e < last; ++e) {
    if (w.cell[e] == cell) return e;
  }
  return -1;
}

int object_at(const GridWorld& w, int cell) {
  for (int o = 0; o < kNumObjects6; ++o) {
    if (o != w.held && w.cell[o] == cell) return o;
  }
  return -1;
}

int position(const GridWorld& w, int e) {
  return e < kNumObjects6 && w.held == e ? w.agent : w.cell[e];
}

std::uint8_t required_flag(TaskType t) {
  switch (t) {
    case TaskType::clean: return kClean;
    case TaskType::heat: return kHot;
    case TaskType::cool: return kCold;
    default: return 0;
  }
}

bool object_done(const GridWorld& w, int o) {
  const std::uint8_t f = required_flag(w.task.type);
  return w.held != o && w.cell[o] == w.cell[w.task.destination] &&
         (f == 0 || (w.flags[o] & f) != 0);
}

}  // namespace

bool is_wall(int cell) {
  const int x = cell % kGridSize, y = cell / kGridSize;
  return (x == 4 || y == 4) && !is_door(x, y);
}

int neighbour(int cell, int move) {
  const int x = cell % kGridSize + kDx[move], y = cell / kGridSize + kDy[move];
  if (x < 0 || y < 0 || x >= kGridSize || y >= kGridSize) return -1;
  const int n = y * kGridSize + x;
  return is_wall(n) ? -1 : n;
}

int grid_distance(int from, int to) { return distances()[from][to]; }

bool is_legal(const GridWorld& w, int a) {
  if (w.done) return false;
  switch (a) {
    case kMoveN: case kMoveS: case kMoveE: case kMoveW:
      return neighbour(w.agent, a) >= 0;
    case kPickup:
      return w.held < 0 && object_at(w, w.agent) >= 0;
    case kPut:
      return w.held >= 0 && entity_at(w, w.agent, kFirstReceptacle, kNumEntities) >= 0;
    case kOpen:
      return (w.agent == w.cell[kFridge] && !w.fridge_open) ||
             (w.agent == w.cell[kMicrowave] && !w.microwave_open);
    case kClose:
      return (w.agent == w.cell[kFridge] && w.fridge_open) ||
             (w.agent == w.cell[kMicrowave] && w.microwave_open);
    case kToggle:
      return w.agent == w.cell[kSink] || w.agent == w.cell[kLamp] ||
             (w.agent == w.cell[kFridge] && w.fridge_open) ||
             (w.agent == w.cell[kMicrowave] && w.microwave_open);
    default:
      return false;
  }
}

std::array<bool, kNumActions> legal_actions(const GridWorld& w) {
  std::array<bool, kNumActions> out{};
  for (int a = 0; a < kNumActions; ++a) out[a] = is_legal(w, a);
  return out;
}

bool task_satisfied(const GridWorld& w) {
  const TaskSpec& t = w.task;
  switch (t.type) {
    case TaskType::look:
      return w.held == t.object && w.lamp_on;
    case TaskType::place_two:
      return object_done(w, t.object) && object_done(w, t.object2);
    default:
      return object_done(w, t.object);
  }
}

StepResult nav_step(const GridWorld& w, int a) {
  if (a < 0 || a >= kNumActions) throw std::out_of_range("nav_step: unknown action");
  StepResult r{w};
  GridWorld& s = r.world;
  if (w.done) {
    r.done = true;
    r.success = w.success;
    r.illegal = true;
    return r;
  }
  r.illegal = !is_legal(w, a);
  if (!r.illegal) {
    switch (a) {
      case kPickup:
        s.held = object_at(w, w.agent);
        s.cell[s.held] = -1;
        break;
      case kPut:
        s.cell[s.held] = w.agent;
        s.held = -1;
        break;
      case kOpen:
      case kClose: {
        const bool open = a == kOpen;
        (w.agent == w.cell[kFridge] ? s.fridge_open : s.microwave_open) = open;
        break;
      }
      case kToggle:
        if (w.agent == w.cell[kLamp]) {
          s.lamp_on = !w.lamp_on;
        } else if (w.held >= 0) {
          auto& f = s.flags[w.held];
          if (w.agent == w.cell[kSink]) f |= kClean;
          if (w.agent == w.cell[kMicrowave]) f = static_cast<std::uint8_t>((f & ~kCold) | kHot);
          if (w.agent == w.cell[kFridge]) f = static_cast<std::uint8_t>((f & ~kHot) | kCold);
        }
        break;
      default:
        s.agent = neighbour(w.agent, a);
    }
  }
  ++s.steps;
  s.success = task_satisfied(s);
  s.done = s.success || s.steps >= kMaxGameSteps;
  r.done = s.done;
  r.success = s.success;
  return r;
}

namespace {

// First move (N, S, E, W order) that shortens the path to `target`.
int step_towards(int from, int target) {
  const int d = grid_distance(from, target);
  for (int m = 0; m < 4; ++m) {
    const int n = neighbour(from, m);
    if (n >= 0 && grid_distance(n, target) == d - 1) return m;
  }
  throw UnsolvableTask("no path to target cell");
}

// Walk to entity e, then perform `action` there.
PlanStep reach_then(const GridWorld& w, PlanStep p, int e, int action, StepKind kind) {
  const int target = position(w, e);
  if (w.agent != target) {
    p.action = step_towards(w.agent, target);
    p.step = StepKind::go_to;
  } else {
    p.action = action;
    p.step = kind;
  }
  p.step_entity = e;
  return p;
}

PlanStep get_object(const GridWorld& w, int o) {
  PlanStep p;
  p.subgoal = Subgoal::get;
  p.subgoal_object = o;
  return reach_then(w, p, o, kPickup, StepKind::pickup);
}

PlanStep stash(const GridWorld& w, const std::vector<int>& keep_free) {
  int best = -1;
  for (int r = kFirstReceptacle; r < kNumEntities; ++r) {
    const bool blocked = std::any_of(keep_free.begin(), keep_free.end(),
                                     [&](int o) { return w.cell[o] == w.cell[r]; });
    if (blocked) continue;
    if (best < 0 || grid_distance(w.agent, w.cell[r]) < grid_distance(w.agent, w.cell[best])) {
      best = r;
    }
  }
  PlanStep p;
  p.subgoal = Subgoal::stash;
  p.subgoal_object = w.held;
  p.subgoal_target = best;
  return reach_then(w, p, best, kPut, StepKind::put);
}

PlanStep treat(const GridWorld& w, int o) {
  PlanStep p;
  const int app = w.task.appliance;
  p.subgoal = w.task.type == TaskType::clean  ? Subgoal::clean
              : w.task.type == TaskType::heat ? Subgoal::heat
                                              : Subgoal::cool;
  p.subgoal_object = o;
  p.subgoal_target = app;
  const bool closed = (app == kFridge && !w.fridge_open) || (app == kMicrowave && !w.microwave_open);
  return closed ? reach_then(w, p, app, kOpen, StepKind::open)
                : reach_then(w, p, app, kToggle, StepKind::toggle);
}

PlanStep place(const GridWorld& w, int o) {
  PlanStep p;
  p.subgoal = Subgoal::place;
  p.subgoal_object = o;
  p.subgoal_target = w.task.destination;
  return reach_then(w, p, w.task.destination, kPut, StepKind::put);
}

PlanStep plan_look(const GridWorld& w) {
  const int x = w.task.object;
  const int lamp = w.cell[kLamp];
  PlanStep light;
  light.subgoal = Subgoal::light;
  light.subgoal_object = x;
  light.subgoal_target = kLamp;
  if (w.held == x) return reach_then(w, light, kLamp, kToggle, StepKind::toggle);
  if (w.held >= 0) return stash(w, {x});
  if (!w.lamp_on) {
    const int ox = w.cell[x];
    const int object_first = grid_distance(w.agent, ox) + grid_distance(ox, lamp);
    const int lamp_first = grid_distance(w.agent, lamp) + grid_distance(lamp, ox);
    if (lamp_first < object_first) return reach_then(w, light, kLamp, kToggle, StepKind::toggle);
  }
  return get_object(w, x);
}

}  // namespace

PlanStep plan_next(const GridWorld& w) {
  if (w.done) throw UnsolvableTask("plan_next: game already finished");
  const TaskSpec& t = w.task;
  if (t.type == TaskType::look) return plan_look(w);

  std::vector<int> unfinished;
  for (int o : {t.object, t.object2}) {
    if (o >= 0 && !object_done(w, o)) unfinished.push_back(o);
  }
  const std::uint8_t flag = required_flag(t.type);
  if (w.held >= 0) {
    if (std::find(unfinished.begin(), unfinished.end(), w.held) == unfinished.end()) {
      return stash(w, unfinished);
    }
    if (flag != 0 && (w.flags[w.held] & flag) == 0) return treat(w, w.held);
    return place(w, w.held);
  }
  if (unfinished.empty()) throw UnsolvableTask("plan_next: nothing left to do");
  int next = unfinished[0];
  if (unfinished.size() == 2) {
    const int r = w.cell[t.destination];
    auto tour = [&](int a, int b) {
      return grid_distance(w.agent, w.cell[a]) + grid_distance(w.cell[a], r) +
             grid_distance(r, w.cell[b]) + grid_distance(w.cell[b], r);
    };
    if (tour(unfinished[1], unfinished[0]) < tour(unfinished[0], unfinished[1])) {
      next = unfinished[1];
    }
  }
  return get_object(w, next);
}

InstructionLevels instructions_for(const GridWorld& w, const PlanStep& s) {
  auto msg = [](int level, std::vector<int> tokens) {
    Message m;
    m.kind = MessageKind::navigation;
    m.tag = level;
    m.tokens = std::move(tokens);
    return m;
  };
  auto ent = [](int e) { return kEntityToken0 + e; };
  const TaskSpec& t = w.task;

  std::vector<int> task{kTaskToken0 + static_cast<int>(t.type), ent(t.object)};
  if (t.object2 >= 0) task.push_back(ent(t.object2));
  task.push_back(ent(t.type == TaskType::look ? kLamp : t.destination));

  std::vector<int> sub{kSubgoalToken0 + static_cast<int>(s.subgoal)};
  if (s.subgoal != Subgoal::stash) sub.push_back(ent(s.subgoal_object));
  if (s.subgoal == Subgoal::place || s.subgoal == Subgoal::stash) sub.push_back(ent(s.subgoal_target));

  return {msg(1, std::move(task)), msg(2, std::move(sub)),
          msg(3, {kStepToken0 + static_cast<int>(s.step), ent(s.step_entity)}),
          msg(4, {kActionToken0 + s.action})};
}

ExpertPlan expert_plan(const GridWorld& start, int max_steps) {
  ExpertPlan plan;
  GridWorld w = start;
  w.done = false;
  w.steps = 0;
  if (task_satisfied(w)) return plan;
  for (int i = 0; i < max_steps; ++i) {
    const PlanStep s = plan_next(w);
    plan.trajectory.push_back(s.action);
    plan.levels.push_back(instructions_for(w, s));
    auto r = nav_step(w, s.action);
    if (r.illegal) throw UnsolvableTask("expert produced an illegal action");
    w = r.world;
    w.done = false;
    w.steps = 0;  // the expert ignores the game cap
    if (r.success) return plan;
  }
  throw UnsolvableTask("expert did not finish within the step budget");
}

namespace {

GridWorld random_layout(Rng& rng) {
  std::vector<int> free;
  for (int c = 0; c < kNumCells; ++c) {
    const int x = c % kGridSize, y = c / kGridSize;
    if (!is_wall(c) && !is_door(x, y)) free.push_back(c);
  }
  shuffle(rng, free);
  GridWorld w;
  for (int e = 0; e < kNumEntities; ++e) w.cell[e] = free[e];
  w.agent = free[kNumEntities];
  return w;
}

TaskSpec random_task(Rng& rng, TaskType type) {
  TaskSpec t;
  t.type = type;
  t.object = static_cast<int>(uniform_index(rng, kNumObjects6));
  switch (type) {
    case TaskType::clean: t.appliance = kSink; break;
    case TaskType::heat: t.appliance = kMicrowave; break;
    case TaskType::cool: t.appliance = kFridge; break;
    case TaskType::look: t.appliance = kLamp; break;
    default: break;
  }
  if (type == TaskType::place_two) {
    t.object2 = static_cast<int>(uniform_index(rng, kNumObjects6 - 1));
    if (t.object2 >= t.object) ++t.object2;
  }
  if (type != TaskType::look) {
    t.destination = kFirstReceptacle + static_cast<int>(uniform_index(rng, 3));
  }
  return t;
}

}  // namespace

GridWorld sample_nav_game(Rng& rng, TaskType type, int min_len, int max_len) {
  for (int attempt = 0; attempt < 10000; ++attempt) {
    GridWorld w = random_layout(rng);
    w.task = random_task(rng, type);
    const auto n = static_cast<int>(expert_plan(w).trajectory.size());
    if (n >= min_len && n <= max_len) return w;
  }
  throw UnsolvableTask("could not sample a task within the length window");
}

GridWorld sample_nav_game(Rng& rng, int min_len, int max_len) {
  const auto type = static_cast<TaskType>(uniform_index(rng, kNumTaskTypes));
  return sample_nav_game(rng, type, min_len, max_len);
}

NavFeatures nav_features(const GridWorld& w) {
  NavFeatures f;
  std::array<int, kNumEntities> pos{};
  std::array<bool, kNumEntities> at{};
  for (int e = 0; e < kNumEntities; ++e) {
    pos[e] = e < kNumObjects6 && w.held == e ? -1 : w.cell[e];
    at[e] = pos[e] == w.agent;
    f.global[e] = at[e] ? 1.0 : 0.0;
  }
  f.global[kNumEntities + 1 + w.held] = 1.0;
  if (w.held >= 0) {
    const auto fl = w.flags[w.held];
    f.global[kNumEntities + 7] = (fl & kClean) ? 1.0 : 0.0;
    f.global[kNumEntities + 8] = (fl & kHot) ? 1.0 : 0.0;
    f.global[kNumEntities + 9] = (fl & kCold) ? 1.0 : 0.0;
  }
  f.global[kNumEntities + 10] = w.fridge_open ? 1.0 : 0.0;
  f.global[kNumEntities + 11] = w.microwave_open ? 1.0 : 0.0;
  f.global[kNumEntities + 12] = w.lamp_on ? 1.0 : 0.0;

  f.legal = legal_actions(w);
  for (int a = 0; a < kNumActions; ++a) {
    double* row = f.action.data() + a * kNavActionDim;
    row[a] = 1.0;
    if (is_move(a)) {
      const int n = neighbour(w.agent, a);
      if (n < 0) continue;
      for (int e = 0; e < kNumEntities; ++e) {
        if (pos[e] >= 0 && grid_distance(n, pos[e]) < grid_distance(w.agent, pos[e])) {
          row[kNumActions + e] = 1.0;
        }
      }
    } else {
      for (int e = 0; e < kNumEntities; ++e) {
        row[kNumActions + kNumEntities + e] = at[e] ? 1.0 : 0.0;
      }
    }
  }
  return f;
}

}  // namespace tomcoord::worlds
