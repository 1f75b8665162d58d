#include "tomcoord/autodiff/params.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace tomcoord::ad {

void ParamVector::add(std::string name, Tensor value) {
  for (const auto& s : segments_) {
    if (s.name == name) {
      throw std::invalid_argument("duplicate parameter segment '" + name + "'");
    }
  }
  segments_.push_back({std::move(name), std::move(value)});
}

std::size_t ParamVector::total_size() const {
  std::size_t n = 0;
  for (const auto& s : segments_) n += s.value.size();
  return n;
}

std::size_t ParamVector::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].name == name) return i;
  }
  throw std::out_of_range("no parameter segment '" + name + "'");
}

const Tensor& ParamVector::operator[](const std::string& name) const {
  return segments_[index_of(name)].value;
}

Tensor& ParamVector::operator[](const std::string& name) {
  return segments_[index_of(name)].value;
}

bool ParamVector::same_structure(const ParamVector& other) const {
  if (segments_.size() != other.segments_.size()) return false;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (segments_[i].name != other.segments_[i].name ||
        segments_[i].value.shape() != other.segments_[i].value.shape()) {
      return false;
    }
  }
  return true;
}

ParamVector ParamVector::zeros_like() const {
  ParamVector out;
  for (const auto& s : segments_) out.add(s.name, Tensor::zeros(s.value.shape()));
  return out;
}

std::vector<double> ParamVector::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_size());
  for (const auto& s : segments_) {
    flat.insert(flat.end(), s.value.data().begin(), s.value.data().end());
  }
  return flat;
}

void ParamVector::assign_flat(std::span<const double> flat) {
  if (flat.size() != total_size()) {
    throw ShapeError("assign_flat: expected " + std::to_string(total_size()) +
                     " values, got " + std::to_string(flat.size()));
  }
  std::size_t off = 0;
  for (auto& s : segments_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), s.value.size(),
                s.value.data().begin());
    off += s.value.size();
  }
}

std::vector<Var> bind(Tape& tape, const ParamVector& params) {
  std::vector<Var> vars;
  vars.reserve(params.num_segments());
  for (const auto& s : params.segments()) vars.push_back(tape.variable(s.value));
  return vars;
}

std::vector<Var> constants(const ParamVector& params) {
  std::vector<Var> vars;
  vars.reserve(params.num_segments());
  for (const auto& s : params.segments()) vars.push_back(Var::constant(s.value));
  return vars;
}

ParamVector unbind(const ParamVector& like, std::span<const Var> vars) {
  if (vars.size() != like.num_segments()) {
    throw ShapeError("unbind: segment count mismatch");
  }
  ParamVector out;
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (vars[i].shape() != like.segment(i).value.shape()) {
      throw ShapeError("unbind: shape mismatch in segment '" +
                       like.segment(i).name + "'");
    }
    out.add(like.segment(i).name, vars[i].value());
  }
  return out;
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grad,
                     std::span<const double> lrs) {
  if (!params.same_structure(grad) || lrs.size() != params.num_segments()) {
    throw ShapeError("sgd_step: parameter, gradient and lr structure differ");
  }
  ParamVector out = params;
  for (std::size_t i = 0; i < out.num_segments(); ++i) {
    auto dst = out.segment(i).value.data();
    auto g = grad.segment(i).value.data();
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] -= lrs[i] * g[k];
  }
  return out;
}

std::vector<Var> sgd_step(std::span<const Var> params, std::span<const Var> grads,
                          std::span<const Var> lrs) {
  if (params.size() != grads.size() || params.size() != lrs.size()) {
    throw ShapeError("sgd_step: parameter, gradient and lr counts differ");
  }
  std::vector<Var> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape()) {
      throw ShapeError("sgd_step: gradient shape mismatch");
    }
    out.push_back(sub(params[i], mul(grads[i], lrs[i])));
  }
  return out;
}

void Momentum::step(ParamVector& params, const ParamVector& grad) {
  if (!params.same_structure(grad)) throw ShapeError("Momentum: gradient structure differs");
  if (velocity_.num_segments() == 0) velocity_ = params.zeros_like();
  for (std::size_t i = 0; i < params.num_segments(); ++i) {
    auto p = params.segment(i).value.data();
    auto v = velocity_.segment(i).value.data();
    auto g = grad.segment(i).value.data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = mu_ * v[k] + g[k];
      p[k] -= lr_ * v[k];
    }
  }
}

ForwardResult forward(const Program& program, std::span<const Tensor> inputs,
                      const ParamVector& params) {
  ForwardResult r;
  r.tape = std::make_unique<Tape>();
  r.layout = params;
  r.param_vars = bind(*r.tape, params);
  std::vector<Var> in;
  in.reserve(inputs.size());
  for (const auto& t : inputs) in.push_back(Var::constant(t));
  r.out = program(r.param_vars, in);
  r.output = r.out.value();
  return r;
}

ParamVector backward(const ForwardResult& result, const Tensor& seed) {
  const auto grads =
      result.tape->gradient(result.out, result.param_vars, &seed, false);
  return unbind(result.layout, grads);
}

namespace {

double project(const Program& program, std::span<const Var> params,
               std::span<const Var> inputs, const Tensor& seed) {
  const Tensor out = program(params, inputs).value();
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += seed[i] * out[i];
  return s;
}

}  // namespace

GradCheckReport grad_check(const Program& program, const ParamVector& params,
                           std::span<const Tensor> inputs, double tolerance,
                           std::uint64_t seed) {
  GradCheckReport report;
  ForwardResult fr = forward(program, inputs, params);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor projection = Tensor::zeros(fr.output.shape());
  for (double& v : projection.data()) v = normal(rng);
  const ParamVector analytic = backward(fr, projection);

  std::vector<Var> in;
  for (const auto& t : inputs) in.push_back(Var::constant(t));
  constexpr double kStep = 1e-5;
  ParamVector probe = params;
  for (std::size_t s = 0; s < probe.num_segments(); ++s) {
    auto values = probe.segment(s).value.data();
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double orig = values[k];
      values[k] = orig + kStep;
      const double up = project(program, constants(probe), in, projection);
      values[k] = orig - kStep;
      const double down = project(program, constants(probe), in, projection);
      values[k] = orig;
      const double numeric = (up - down) / (2.0 * kStep);
      const double exact = analytic.segment(s).value[k];
      const double denom =
          std::max({std::abs(exact), std::abs(numeric), 1e-6});
      const double rel = std::abs(exact - numeric) / denom;
      ++report.checked;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_segment = probe.segment(s).name;
      }
    }
  }
  report.passed = report.max_rel_err < tolerance;
  return report;
}

namespace {

constexpr char kMagic[7] = {'T', 'O', 'M', 'P', 'O', 'P', '1'};
constexpr std::uint8_t kVersion = 1;

template <typename T>
void put_le(std::ostream& os, T v) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    os.put(static_cast<char>(u & 0xFF));
    u = static_cast<U>(u >> 8);
  }
}

template <typename T>
T get_le(std::istream& is) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = is.get();
    if (c == std::char_traits<char>::eof()) {
      throw std::runtime_error("parameter blob truncated");
    }
    u |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(c)) << (8 * i));
  }
  return static_cast<T>(u);
}

}  // namespace

void write_params(std::ostream& os, const ParamVector& params) {
  os.write(kMagic, sizeof(kMagic));
  os.put(static_cast<char>(kVersion));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.num_segments()));
  std::uint64_t offset = 0;
  for (const auto& s : params.segments()) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.name.size()));
    os.write(s.name.data(), static_cast<std::streamsize>(s.name.size()));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.value.shape().size()));
    for (auto d : s.value.shape()) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    put_le<std::uint64_t>(os, offset);
    put_le<std::uint64_t>(os, s.value.size());
    offset += s.value.size();
  }
  for (const auto& s : params.segments()) {
    for (double v : s.value.data()) {
      put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  if (!os) throw std::runtime_error("failed writing parameter blob");
}

ParamVector read_params(std::istream& is) {
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("not a TOMPOP1 parameter blob");
  }
  const int version = is.get();
  if (version != kVersion) {
    throw std::runtime_error("unsupported parameter blob version " +
                             std::to_string(version));
  }
  const auto n = get_le<std::uint32_t>(is);
  struct Entry {
    std::string name;
    Shape shape;
    std::uint64_t offset;
    std::uint64_t count;
  };
  std::vector<Entry> dir(n);
  for (auto& e : dir) {
    const auto len = get_le<std::uint32_t>(is);
    e.name.resize(len);
    if (!is.read(e.name.data(), len)) throw std::runtime_error("parameter blob truncated");
    const auto rank = get_le<std::uint32_t>(is);
    for (std::uint32_t r = 0; r < rank; ++r) e.shape.push_back(get_le<std::uint32_t>(is));
    e.offset = get_le<std::uint64_t>(is);
    e.count = get_le<std::uint64_t>(is);
    if (shape_size(e.shape) != e.count) {
      throw std::runtime_error("parameter blob directory inconsistent for '" +
                               e.name + "'");
    }
  }
  std::uint64_t expected = 0;
  ParamVector out;
  for (const auto& e : dir) {
    if (e.offset != expected) throw std::runtime_error("parameter blob offsets out of order");
    std::vector<double> data(e.count);
    for (auto& v : data) {
      v = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(is)));
    }
    out.add(e.name, Tensor(e.shape, std::move(data)));
    expected += e.count;
  }
  return out;
}

void save_params(const std::string& path, const ParamVector& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_params(os, params);
}

ParamVector load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_params(is);
}

}  // namespace tomcoord::ad
