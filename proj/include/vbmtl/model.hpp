// vbmtl/model.hpp

// Copyright 2026 The vbmtl Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

/*
 * Forward graph: backbone -> masked mean pooling -> per-task projection heads.
 *
 * Heads map in_dim -> 256 -> GELU -> task dim -> output activation. Under an
 * intermediate routing preset the intermediate heads read the pooled vector
 * and the final heads read [pooled, intermediate outputs...].
 */

#pragma once

#include "vbmtl/autodiff.hpp"
#include "vbmtl/dataio.hpp"
#include "vbmtl/objectives.hpp"
#include "vbmtl/task_schema.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace vbmtl {

inline double Gelu(double x) { return ad::GeluValue(x); }

inline double Clamp01(double x) { return std::min(std::max(x, 0.0), 1.0); }

/// Value-only masked mean pooling. frames is (B*T) x D stacked.
inline Matrix MaskedMeanPool(const Matrix& frames, const Matrix& mask) {
  return ad::MaskedMeanPool(ad::Constant(frames), mask).value();
}

struct Parameter {
  std::string name;
  ad::Var var;
};

namespace internal {

inline Parameter MakeWeight(const std::string& name, Eigen::Index fan_in,
                            Eigen::Index fan_out, std::uint64_t seed) {
  Rng rng(MixSeed(seed, Fnv1a(name)));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.Uniform(-bound, bound);
  return {name, ad::Var(std::move(w), true)};
}

inline Parameter MakeBias(const std::string& name, Eigen::Index width) {
  return {name, ad::Var(Matrix::Zero(1, width), true)};
}

}  // namespace internal

// ---------------------------------------------------------------------------
// Backbones

enum class BackboneKind { kIdentity, kTinyEncoder };

inline std::string ToString(BackboneKind k) {
  return k == BackboneKind::kIdentity ? "identity" : "tiny";
}

inline BackboneKind ParseBackboneKind(std::string_view s) {
  if (s == "identity") return BackboneKind::kIdentity;
  if (s == "tiny") return BackboneKind::kTinyEncoder;
  throw ConfigError(StrCat("unknown backbone '", s, "'"));
}

/// Maps stacked (B*T) x D_in frames plus a B x T mask to (B*T) x D_out
/// contextual frames. Rows at masked positions are ignored downstream.
class Backbone {
 public:
  virtual ~Backbone() = default;
  virtual BackboneKind kind() const = 0;
  virtual Eigen::Index input_dim() const = 0;
  virtual Eigen::Index output_dim() const = 0;
  virtual ad::Var Forward(const ad::Var& frames, const Matrix& mask) const = 0;
  virtual std::vector<Parameter*> parameters() = 0;

  bool frozen() const { return frozen_; }
  void set_frozen(bool frozen) {
    frozen_ = frozen;
    for (Parameter* p : parameters()) p->var.set_requires_grad(!frozen);
  }

 private:
  bool frozen_ = false;
};

class IdentityBackbone final : public Backbone {
 public:
  explicit IdentityBackbone(Eigen::Index dim) : dim_(dim) {}
  BackboneKind kind() const override { return BackboneKind::kIdentity; }
  Eigen::Index input_dim() const override { return dim_; }
  Eigen::Index output_dim() const override { return dim_; }
  ad::Var Forward(const ad::Var& frames, const Matrix&) const override {
    return frames;
  }
  std::vector<Parameter*> parameters() override { return {}; }

 private:
  Eigen::Index dim_;
};

/// Input projection followed by residual temporal-convolution blocks:
///   h0 = mask * (x W_in + b_in)
///   h_{i+1} = h_i + mask * GELU(conv_k(h_i))
/// Padded rows are re-zeroed after every block, so a valid frame next to
/// padding sees the same zeros it would see at a sequence boundary.
class TinyEncoder final : public Backbone {
 public:
  TinyEncoder(Eigen::Index input_dim, Eigen::Index model_dim, int blocks,
              int kernel, std::uint64_t seed)
      : input_dim_(input_dim), model_dim_(model_dim), kernel_(kernel) {
    if (input_dim < 1 || model_dim < 1 || blocks < 0)
      throw ConfigError("TinyEncoder: invalid dimensions");
    if (kernel < 1 || kernel % 2 == 0)
      throw ConfigError("TinyEncoder: kernel must be a positive odd number");
    params_.push_back(internal::MakeWeight("backbone.in.weight", input_dim,
                                           model_dim, seed));
    params_.push_back(internal::MakeBias("backbone.in.bias", model_dim));
    for (int b = 0; b < blocks; ++b) {
      const std::string prefix = StrCat("backbone.block", b, ".conv.");
      params_.push_back(internal::MakeWeight(prefix + "weight",
                                             kernel * model_dim, model_dim, seed));
      params_.push_back(internal::MakeBias(prefix + "bias", model_dim));
    }
  }

  BackboneKind kind() const override { return BackboneKind::kTinyEncoder; }
  Eigen::Index input_dim() const override { return input_dim_; }
  Eigen::Index output_dim() const override { return model_dim_; }
  int blocks() const { return static_cast<int>(params_.size() / 2) - 1; }

  ad::Var Forward(const ad::Var& frames, const Matrix& mask) const override {
    const Eigen::Index steps = mask.cols();
    // Row mask in stacked order: row b*T + t <- mask(b, t).
    Vector row_mask(mask.size());
    for (Eigen::Index b = 0; b < mask.rows(); ++b)
      for (Eigen::Index t = 0; t < steps; ++t) row_mask(b * steps + t) = mask(b, t);

    ad::Var h = ad::MaskRows(
        ad::Affine(frames, params_[0].var, params_[1].var), row_mask);
    const int half = kernel_ / 2;
    for (std::size_t i = 2; i + 1 < params_.size(); i += 2) {
      std::vector<ad::Var> taps;
      for (int o = -half; o <= half; ++o)
        taps.push_back(o == 0 ? h : ad::ShiftRows(h, steps, o));
      ad::Var conv = ad::Affine(ad::ConcatCols(taps), params_[i].var,
                                params_[i + 1].var);
      h = ad::Add(h, ad::MaskRows(ad::Gelu(conv), row_mask));
    }
    return h;
  }

  std::vector<Parameter*> parameters() override {
    std::vector<Parameter*> out;
    for (auto& p : params_) out.push_back(&p);
    return out;
  }

 private:
  Eigen::Index input_dim_;
  Eigen::Index model_dim_;
  int kernel_;
  std::vector<Parameter> params_;
};

// ---------------------------------------------------------------------------
// Heads

inline constexpr int kHeadHiddenDim = 256;

struct ProjectionHead {
  TaskSpec task;
  Eigen::Index in_dim = 0;
  Eigen::Index hidden_dim = kHeadHiddenDim;
  Parameter w1, b1, w2, b2;

  ProjectionHead() = default;
  ProjectionHead(TaskSpec spec, Eigen::Index in, Eigen::Index hidden,
                 std::uint64_t seed)
      : task(std::move(spec)), in_dim(in), hidden_dim(hidden) {
    const std::string prefix = "head." + task.name + ".";
    w1 = internal::MakeWeight(prefix + "proj.weight", in_dim, hidden_dim, seed);
    b1 = internal::MakeBias(prefix + "proj.bias", hidden_dim);
    w2 = internal::MakeWeight(prefix + "out.weight", hidden_dim, task.dim, seed);
    b2 = internal::MakeBias(prefix + "out.bias", task.dim);
  }

  ad::Var Forward(const ad::Var& x) const {
    if (x.cols() != in_dim)
      throw DimensionError(StrCat("head ", task.name, ": input width ",
                                  x.cols(), ", expected ", in_dim));
    ad::Var logits =
        ad::Affine(ad::Gelu(ad::Affine(x, w1.var, b1.var)), w2.var, b2.var);
    switch (task.activation) {
      case OutputActivation::kSoftmax: return ad::SoftmaxRows(logits);
      case OutputActivation::kSigmoid: return ad::Sigmoid(logits);
      case OutputActivation::kLinearClamp01: return ad::Clamp01(logits);
    }
    return logits;
  }

  std::vector<Parameter*> parameters() { return {&w1, &b1, &w2, &b2}; }
};

// ---------------------------------------------------------------------------
// Routing

struct RoutingPlan {
  std::vector<std::string> intermediate_tasks;
  std::vector<std::string> final_tasks;
  Eigen::Index pooled_dim = 0;
  Eigen::Index final_in_dim = 0;
};

inline RoutingPlan BuildRoutingPlan(const TaskSet& tasks, Eigen::Index pooled_dim) {
  RoutingPlan plan;
  plan.pooled_dim = pooled_dim;
  plan.final_in_dim = pooled_dim;
  for (const auto& t : tasks.tasks) {
    if (t.stage == RoutingStage::kIntermediate) {
      plan.intermediate_tasks.push_back(t.name);
      plan.final_in_dim += t.dim;
    } else {
      plan.final_tasks.push_back(t.name);
    }
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Model

struct ModelConfig {
  BackboneKind backbone = BackboneKind::kTinyEncoder;
  Eigen::Index input_dim = 32;
  Eigen::Index encoder_dim = 64;
  int encoder_blocks = 2;
  int kernel = 3;
  Eigen::Index hidden_dim = kHeadHiddenDim;
  bool detach_intermediate = false;
  std::uint64_t init_seed = 0;

  bool operator==(const ModelConfig&) const = default;
};

struct ForwardOutput {
  std::map<std::string, ad::Var> outputs;
  ad::Var pooled;
};

/// Canonical text for a TaskSet + model shape; its FNV-1a hash is the
/// checkpoint fingerprint. The init seed is not part of the shape.
inline std::string DescribeShape(const TaskSet& tasks, const ModelConfig& cfg) {
  std::ostringstream os;
  os << "routing=" << ToString(tasks.routing) << '\n';
  for (const auto& t : tasks.tasks) {
    os << "task=" << t.name << ','
       << (t.is_regression() ? "regression" : "classification") << ','
       << t.dim << ',' << ToString(t.loss) << ',' << ToString(t.activation)
       << ',' << (t.stage == RoutingStage::kIntermediate ? "intermediate" : "final")
       << '\n';
  }
  os << "backbone=" << ToString(cfg.backbone) << '\n'
     << "input_dim=" << cfg.input_dim << '\n'
     << "encoder_dim=" << cfg.encoder_dim << '\n'
     << "encoder_blocks=" << cfg.encoder_blocks << '\n'
     << "kernel=" << cfg.kernel << '\n'
     << "hidden_dim=" << cfg.hidden_dim << '\n'
     << "detach_intermediate=" << (cfg.detach_intermediate ? 1 : 0) << '\n';
  return os.str();
}

inline std::uint64_t Fingerprint(const TaskSet& tasks, const ModelConfig& cfg) {
  return Fnv1a(DescribeShape(tasks, cfg));
}

class Model {
 public:
  Model(ModelConfig cfg, TaskSet tasks) : cfg_(cfg), tasks_(std::move(tasks)) {
    ValidateTaskSet(tasks_);
    if (tasks_.tasks.empty()) throw ConfigError("Model: no active tasks");
    if (cfg_.backbone == BackboneKind::kIdentity) {
      backbone_ = std::make_unique<IdentityBackbone>(cfg_.input_dim);
    } else {
      backbone_ = std::make_unique<TinyEncoder>(cfg_.input_dim, cfg_.encoder_dim,
                                                cfg_.encoder_blocks, cfg_.kernel,
                                                cfg_.init_seed);
    }
    plan_ = BuildRoutingPlan(tasks_, backbone_->output_dim());
    for (const auto& t : tasks_.tasks) {
      const Eigen::Index in = t.stage == RoutingStage::kIntermediate
                                  ? plan_.pooled_dim
                                  : plan_.final_in_dim;
      heads_.emplace_back(t, in, cfg_.hidden_dim, cfg_.init_seed);
    }
    log_vars_ = {"uncertainty.log_vars",
                 ad::Var(Matrix::Zero(1, static_cast<Eigen::Index>(tasks_.size())),
                         true)};
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return cfg_; }
  const TaskSet& tasks() const { return tasks_; }
  const RoutingPlan& plan() const { return plan_; }
  Backbone& backbone() { return *backbone_; }
  const Backbone& backbone() const { return *backbone_; }
  const ProjectionHead& head(std::string_view task) const {
    for (const auto& h : heads_)
      if (h.task.name == task) return h;
    throw ConfigError(StrCat("no head for task '", task, "'"));
  }
  const ad::Var& log_vars() const { return log_vars_.var; }
  std::uint64_t fingerprint() const { return Fingerprint(tasks_, cfg_); }

  ForwardOutput Forward(const Matrix& frames, const Matrix& mask) const {
    if (frames.cols() != backbone_->input_dim())
      throw DimensionError(StrCat("model expects D=", backbone_->input_dim(),
                                  ", batch has D=", frames.cols()));
    ForwardOutput out;
    ad::Var hidden = backbone_->Forward(ad::Constant(frames), mask);
    out.pooled = ad::MaskedMeanPool(hidden, mask);
    std::vector<ad::Var> final_inputs{out.pooled};
    for (const auto& name : plan_.intermediate_tasks) {
      ad::Var y = head(name).Forward(out.pooled);
      out.outputs[name] = y;
      final_inputs.push_back(cfg_.detach_intermediate ? ad::Detach(y) : y);
    }
    ad::Var final_in =
        final_inputs.size() == 1 ? out.pooled : ad::ConcatCols(final_inputs);
    for (const auto& name : plan_.final_tasks)
      out.outputs[name] = head(name).Forward(final_in);
    return out;
  }

  ForwardOutput Forward(const Batch& batch) const {
    return Forward(batch.features, batch.mask);
  }

  /// All parameters in a fixed order: backbone, heads, log-variances.
  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out = backbone_->parameters();
    for (auto& h : heads_)
      for (Parameter* p : h.parameters()) out.push_back(p);
    out.push_back(&log_vars_);
    return out;
  }

  std::vector<Parameter*> trainable_parameters() {
    std::vector<Parameter*> out;
    for (Parameter* p : parameters())
      if (p->var.requires_grad()) out.push_back(p);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (Parameter* p : parameters()) n += static_cast<std::size_t>(p->var.value().size());
    return n;
  }

  void ZeroGrad() {
    for (Parameter* p : parameters()) p->var.ZeroGrad();
  }

  std::vector<Matrix> Snapshot() {
    std::vector<Matrix> out;
    for (Parameter* p : parameters()) out.push_back(p->var.value());
    return out;
  }

  void Restore(const std::vector<Matrix>& snap) {
    auto params = parameters();
    if (snap.size() != params.size())
      throw CheckpointError("Restore: parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (snap[i].rows() != params[i]->var.rows() ||
          snap[i].cols() != params[i]->var.cols())
        throw CheckpointError(StrCat("Restore: shape mismatch for ",
                                     params[i]->name));
      params[i]->var.mutable_value() = snap[i];
    }
  }

 private:
  ModelConfig cfg_;
  TaskSet tasks_;
  RoutingPlan plan_;
  std::unique_ptr<Backbone> backbone_;
  std::vector<ProjectionHead> heads_;
  Parameter log_vars_;
};

/// Byte-level checksum of a set of parameters (FNV-1a over raw doubles).
inline std::uint64_t ParameterChecksum(const std::vector<Parameter*>& params) {
  std::uint64_t h = 14695981039346656037ull;
  for (const Parameter* p : params) {
    const Matrix& m = p->var.value();
    h = Fnv1a(std::string_view(reinterpret_cast<const char*>(m.data()),
                               sizeof(double) * static_cast<std::size_t>(m.size())),
              h);
  }
  return h;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Layout (little-endian):
//   "VBCK" | u32 version | u64 fingerprint | u32 len | shape text
//   | u32 len | metadata text (key=value lines)
//   | u32 count | { u32 len | name | u32 rows | u32 cols | f64 * rows*cols }...
//   | u64 FNV-1a of everything before it

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace internal {

inline void PutU64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void PutString(std::string& out, std::string_view s) {
  PutU32(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}
  std::uint32_t U32() {
    Need(4);
    auto v = GetU32(reinterpret_cast<const unsigned char*>(bytes_.data() + pos_));
    pos_ += 4;
    return v;
  }
  std::uint64_t U64() {
    const std::uint64_t lo = U32();
    const std::uint64_t hi = U32();
    return lo | (hi << 32);
  }
  std::string String() {
    const std::uint32_t n = U32();
    Need(n);
    std::string s(bytes_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void Need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw CheckpointError("checkpoint truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

inline std::map<std::string, std::string> ParseKeyValueLines(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

}  // namespace internal

using Metadata = std::map<std::string, std::string>;

inline std::string EncodeCheckpoint(Model& model, const Metadata& meta = {}) {
  std::string out = "VBCK";
  internal::PutU32(out, kCheckpointVersion);
  internal::PutU64(out, model.fingerprint());
  internal::PutString(out, DescribeShape(model.tasks(), model.config()));
  std::string meta_text = StrCat("init_seed=", model.config().init_seed, '\n');
  for (const auto& [k, v] : meta) meta_text += k + "=" + v + "\n";
  internal::PutString(out, meta_text);
  const auto params = model.parameters();
  internal::PutU32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    internal::PutString(out, p->name);
    const Matrix& m = p->var.value();
    internal::PutU32(out, static_cast<std::uint32_t>(m.rows()));
    internal::PutU32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i)
      internal::PutU64(out, std::bit_cast<std::uint64_t>(m.data()[i]));
  }
  internal::PutU64(out, Fnv1a(out));
  return out;
}

inline void SaveCheckpoint(Model& model, const std::filesystem::path& path,
                           const Metadata& meta = {}) {
  const std::string bytes = EncodeCheckpoint(model, meta);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(StrCat("cannot open '", tmp, "' for writing"));
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw Error(StrCat("write failed for '", tmp, "'"));
  }
  std::filesystem::rename(tmp, path);
}

namespace internal {

/// Rebuilds TaskSet and ModelConfig from DescribeShape output.
inline std::pair<TaskSet, ModelConfig> ParseShape(const std::string& text,
                                                  std::uint64_t init_seed) {
  TaskSet tasks;
  ModelConfig cfg;
  cfg.init_seed = init_seed;
  std::istringstream is(text);
  std::string line;
  auto to_int = [](const std::string& v) { return std::stoll(v); };
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("bad shape line");
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "routing") {
      tasks.routing = ParseRoutingPreset(val);
    } else if (key == "task") {
      const auto f = SplitCsvLine(val);
      if (f.size() != 6) throw CheckpointError("bad task line");
      TaskSpec t;
      t.name = f[0];
      t.kind = f[1] == "regression" ? TaskKind::kRegression
                                    : TaskKind::kClassification;
      t.dim = static_cast<int>(to_int(f[2]));
      t.loss = ParseLossKind(f[3]);
      t.activation = ParseActivation(f[4]);
      t.stage = f[5] == "intermediate" ? RoutingStage::kIntermediate
                                       : RoutingStage::kFinal;
      tasks.tasks.push_back(t);
    } else if (key == "backbone") {
      cfg.backbone = ParseBackboneKind(val);
    } else if (key == "input_dim") {
      cfg.input_dim = to_int(val);
    } else if (key == "encoder_dim") {
      cfg.encoder_dim = to_int(val);
    } else if (key == "encoder_blocks") {
      cfg.encoder_blocks = static_cast<int>(to_int(val));
    } else if (key == "kernel") {
      cfg.kernel = static_cast<int>(to_int(val));
    } else if (key == "hidden_dim") {
      cfg.hidden_dim = to_int(val);
    } else if (key == "detach_intermediate") {
      cfg.detach_intermediate = val == "1";
    } else {
      throw CheckpointError(StrCat("unknown shape key '", key, "'"));
    }
  }
  return {tasks, cfg};
}

}  // namespace internal

struct LoadedCheckpoint {
  Model model;
  Metadata metadata;
};

/// Loads a checkpoint. When `expected_fingerprint` is given, a checkpoint
/// built for a different TaskSet or model shape is rejected.
inline LoadedCheckpoint LoadCheckpoint(
    const std::filesystem::path& path,
    std::optional<std::uint64_t> expected_fingerprint = std::nullopt) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError(StrCat("cannot open '", path.string(), "'"));
  const std::string bytes((std::istreambuf_iterator<char>(is)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() < 4 + 4 + 8 + 8 || bytes.compare(0, 4, "VBCK") != 0)
    throw CheckpointError(StrCat(path.string(), ": not a checkpoint"));
  const std::string_view body(bytes.data(), bytes.size() - 8);
  internal::ByteReader tail(std::string_view(bytes).substr(bytes.size() - 8));
  if (tail.U64() != Fnv1a(body))
    throw CheckpointError(StrCat(path.string(), ": checksum mismatch (corrupt file)"));

  internal::ByteReader r(body.substr(4));
  if (r.U32() != kCheckpointVersion)
    throw CheckpointError(StrCat(path.string(), ": unsupported version"));
  const std::uint64_t fp = r.U64();
  if (expected_fingerprint && *expected_fingerprint != fp)
    throw CheckpointError(StrCat(path.string(),
                                 ": configuration fingerprint mismatch"));
  const std::string shape = r.String();
  Metadata meta = internal::ParseKeyValueLines(r.String());
  const std::uint64_t seed =
      meta.contains("init_seed") ? std::stoull(meta["init_seed"]) : 0;
  meta.erase("init_seed");
  auto [tasks, cfg] = internal::ParseShape(shape, seed);
  Model model(cfg, tasks);
  if (model.fingerprint() != fp)
    throw CheckpointError(StrCat(path.string(),
                                 ": stored fingerprint does not match its shape"));
  auto params = model.parameters();
  if (r.U32() != params.size())
    throw CheckpointError(StrCat(path.string(), ": parameter count mismatch"));
  for (Parameter* p : params) {
    const std::string name = r.String();
    const std::uint32_t rows = r.U32(), cols = r.U32();
    if (name != p->name || rows != p->var.rows() || cols != p->var.cols())
      throw CheckpointError(StrCat(path.string(), ": unexpected parameter '",
                                   name, "'"));
    Matrix& m = p->var.mutable_value();
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = std::bit_cast<double>(r.U64());
  }
  return {std::move(model), std::move(meta)};
}

/// Loads into an existing model, rejecting a different configuration.
inline Metadata LoadCheckpointInto(Model& model, const std::filesystem::path& path) {
  auto loaded = LoadCheckpoint(path, model.fingerprint());
  model.Restore(loaded.model.Snapshot());
  return loaded.metadata;
}

}  // namespace vbmtl
