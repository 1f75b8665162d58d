#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tomcoord/util/random.hpp"
#include "tomcoord/worlds/message.hpp"

namespace tomcoord::worlds {

inline constexpr int kGridSize = 9;
inline constexpr int kNumCells = kGridSize * kGridSize;
inline constexpr int kMaxGameSteps = 20;

enum Action : int { kMoveN, kMoveS, kMoveE, kMoveW, kPickup, kPut, kOpen, kClose, kToggle };
inline constexpr int kNumActions = 9;
inline constexpr bool is_move(int a) { return a <= kMoveW; }

// Entities: 6 portable objects, 4 appliances, 3 receptacles.
inline constexpr int kNumObjects6 = 6;
inline constexpr int kFridge = 6, kMicrowave = 7, kSink = 8, kLamp = 9;
inline constexpr int kFirstReceptacle = 10;
inline constexpr int kNumEntities = 13;
inline constexpr bool is_receptacle(int e) { return e >= kFirstReceptacle && e < kNumEntities; }

enum class TaskType : int { place, clean, heat, cool, look, place_two };
inline constexpr int kNumTaskTypes = 6;

struct TaskSpec {
  TaskType type = TaskType::place;
  int object = 0;
  int object2 = -1;      // place_two only
  int appliance = -1;    // clean/heat/cool/look
  int destination = -1;  // receptacle; none for look
  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

inline constexpr std::uint8_t kClean = 1, kHot = 2, kCold = 4;

struct GridWorld {
  std::array<int, kNumEntities> cell{};  // objects: current cell, -1 while held
  int agent = 0;
  int held = -1;
  std::array<std::uint8_t, kNumObjects6> flags{};
  bool fridge_open = false;
  bool microwave_open = false;
  bool lamp_on = false;
  TaskSpec task;
  int steps = 0;
  bool done = false;
  bool success = false;
  friend bool operator==(const GridWorld&, const GridWorld&) = default;
};

bool is_wall(int cell);
int neighbour(int cell, int move);  // -1 if blocked
// Shortest path length between two free cells (walls excluded).
int grid_distance(int from, int to);

bool is_legal(const GridWorld& w, int action);
std::array<bool, kNumActions> legal_actions(const GridWorld& w);
bool task_satisfied(const GridWorld& w);

struct StepResult {
  GridWorld world;
  bool done = false;
  bool success = false;
  bool illegal = false;
};

// Pure transition. Illegal actions are no-ops that still consume a step.
StepResult nav_step(const GridWorld& w, int action);

class UnsolvableTask : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Subgoal : int { get, clean, heat, cool, light, place, stash };
enum class StepKind : int { go_to, pickup, put, open, toggle };

struct PlanStep {
  int action = 0;
  Subgoal subgoal = Subgoal::get;
  int subgoal_object = -1;
  int subgoal_target = -1;
  StepKind step = StepKind::go_to;
  int step_entity = -1;
};

// Next expert action from any non-terminal state, replanned from scratch.
PlanStep plan_next(const GridWorld& w);

// Instruction vocabulary.
inline constexpr int kTaskToken0 = 0;
inline constexpr int kEntityToken0 = kTaskToken0 + kNumTaskTypes;     // 6
inline constexpr int kSubgoalToken0 = kEntityToken0 + kNumEntities;   // 19
inline constexpr int kStepToken0 = kSubgoalToken0 + 7;                // 26
inline constexpr int kActionToken0 = kStepToken0 + 5;                 // 31
inline constexpr int kNavWords = kActionToken0 + kNumActions;         // 40
inline constexpr int kNavUnk = kNavWords;
inline constexpr int kNavVocab = kNavWords + 1;
inline constexpr int kNumLevels = 4;

// One candidate per level; index i holds level i + 1 (task ... action).
using InstructionLevels = std::array<Message, kNumLevels>;
InstructionLevels instructions_for(const GridWorld& w, const PlanStep& step);

struct ExpertPlan {
  std::vector<int> trajectory;
  std::vector<InstructionLevels> levels;
};

// Rolls the replanning expert forward from w until success. Throws
// UnsolvableTask when the expert cannot finish.
ExpertPlan expert_plan(const GridWorld& w, int max_steps = 200);

// Random layout and task whose expert solution length lies in [lo, hi].
GridWorld sample_nav_game(Rng& rng, int min_len = 6, int max_len = 17);
// Same but with a fixed task type.
GridWorld sample_nav_game(Rng& rng, TaskType type, int min_len = 6, int max_len = 17);

// Features consumed by listener networks.
inline constexpr int kNavGlobalDim = kNumEntities + 7 + 3 + 3;          // 26
inline constexpr int kNavActionDim = kNumActions + 2 * kNumEntities;    // 35

struct NavFeatures {
  std::array<double, kNavGlobalDim> global{};
  std::array<double, kNumActions * kNavActionDim> action{};
  std::array<bool, kNumActions> legal{};
};
NavFeatures nav_features(const GridWorld& w);

}  // namespace tomcoord::worlds
