// vbmtl/config.hpp

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
 * Experiment configuration.
 *
 * File format: one `key = value` per line, `[section]` headers prefix the
 * keys that follow with `section.`, `#` starts a comment. Keys are dotted
 * paths such as `trainer.stage2.lr_max`. Overrides use the same `key=value`
 * form and are applied after the file. Unknown keys are errors.
 *
 *   seed = 7
 *   [data]
 *   synth = true
 *   synth.n_samples = 200
 *   [tasks]
 *   preset = 0/5
 *   variants = -Two,-SM
 *   [trainer]
 *   stage2.lr_max = 4e-5
 */

#pragma once

#include "vbmtl/dataio.hpp"
#include "vbmtl/model.hpp"
#include "vbmtl/trainer.hpp"
#include "vbmtl/weighting.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace vbmtl {

struct ExperimentConfig {
  // data
  std::string manifest;  // empty when synthetic
  bool synth = false;
  SynthSpec synth_spec;
  // tasks
  RoutingPreset routing = RoutingPreset::kZeroFive;
  std::set<std::string> variants;
  bool class_weights = true;
  SampleWeighting sample_weighting = SampleWeighting::kNone;
  UncertaintyForm uncertainty = UncertaintyForm::kSimple;
  // model (input_dim is taken from the data)
  ModelConfig model;
  // trainer
  StageConfig stage1 = StageConfig::HeadsOnlyDefaults();
  StageConfig stage2 = StageConfig::FineTuneDefaults();
  // run
  std::uint64_t seed = 0;
  std::string out_dir = "runs";

  TaskSet BuildTasks() const { return BuildTaskSet(routing, variants); }

  bool operator==(const ExperimentConfig&) const = default;
};

namespace internal {

inline std::string JoinSet(const std::set<std::string>& s) {
  std::string out;
  for (const auto& v : s) out += (out.empty() ? "" : ",") + v;
  return out;
}

inline std::string FormatDouble(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

struct KeyBinding {
  std::string type;  // for error messages
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

inline double ToDouble(const std::string& key, const std::string& v) {
  auto d = ParseDouble(v);
  if (!d) throw ConfigError(StrCat(key, ": expected a real number, got '", v, "'"));
  return *d;
}

inline long long ToInt(const std::string& key, const std::string& v) {
  auto i = ParseInt(v);
  if (!i) throw ConfigError(StrCat(key, ": expected an integer, got '", v, "'"));
  return *i;
}

inline std::uint64_t ToU64(const std::string& key, const std::string& v) {
  const std::string t = Trim(v);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError(StrCat(key, ": expected an unsigned integer, got '", v, "'"));
  return out;
}

inline bool ToBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(StrCat(key, ": expected true/false, got '", v, "'"));
}

template <typename Parse>
auto Wrap(const std::string& key, Parse parse, const std::string& v) {
  try {
    return parse(v);
  } catch (const ConfigError& e) {
    throw ConfigError(StrCat(key, ": ", e.what()));
  }
}

inline std::set<std::string> ToFlags(const std::string& v) {
  std::set<std::string> out;
  for (const auto& part : SplitCsvLine(v)) {
    const std::string t = Trim(part);
    if (!t.empty()) out.insert(t);
  }
  return out;
}

inline const std::map<std::string, KeyBinding>& Bindings() {
  using C = ExperimentConfig;
  static const std::map<std::string, KeyBinding> kBindings = [] {
    std::map<std::string, KeyBinding> b;
    auto real = [&b](const std::string& key, auto member) {
      b[key] = {"real",
                [key, member](C& c, const std::string& v) { member(c) = ToDouble(key, v); },
                [member](const C& c) { return FormatDouble(member(const_cast<C&>(c))); }};
    };
    auto integer = [&b](const std::string& key, auto member) {
      b[key] = {"integer",
                [key, member](C& c, const std::string& v) {
                  member(c) = static_cast<std::remove_reference_t<decltype(member(c))>>(
                      ToInt(key, v));
                },
                [member](const C& c) { return std::to_string(member(const_cast<C&>(c))); }};
    };
    auto boolean = [&b](const std::string& key, auto member) {
      b[key] = {"bool",
                [key, member](C& c, const std::string& v) { member(c) = ToBool(key, v); },
                [member](const C& c) {
                  return std::string(member(const_cast<C&>(c)) ? "true" : "false");
                }};
    };

    b["seed"] = {"unsigned",
                 [](C& c, const std::string& v) { c.seed = ToU64("seed", v); },
                 [](const C& c) { return std::to_string(c.seed); }};
    b["out"] = {"path", [](C& c, const std::string& v) { c.out_dir = v; },
                [](const C& c) { return c.out_dir; }};

    b["data.manifest"] = {"path",
                          [](C& c, const std::string& v) { c.manifest = v; },
                          [](const C& c) { return c.manifest; }};
    boolean("data.synth", [](C& c) -> bool& { return c.synth; });
    integer("data.synth.n_samples", [](C& c) -> int& { return c.synth_spec.n_samples; });
    integer("data.synth.dim", [](C& c) -> int& { return c.synth_spec.dim; });
    integer("data.synth.t_min", [](C& c) -> int& { return c.synth_spec.t_min; });
    integer("data.synth.t_max", [](C& c) -> int& { return c.synth_spec.t_max; });
    real("data.synth.noise", [](C& c) -> double& { return c.synth_spec.noise_level; });
    real("data.synth.train_ratio", [](C& c) -> double& { return c.synth_spec.train_ratio; });

    b["tasks.preset"] = {"preset",
                         [](C& c, const std::string& v) {
                           c.routing = Wrap("tasks.preset", ParseRoutingPreset, v);
                         },
                         [](const C& c) { return ToString(c.routing); }};
    b["tasks.variants"] = {"flag list",
                           [](C& c, const std::string& v) {
                             auto flags = ToFlags(v);
                             for (const auto& f : flags)
                               if (!KnownTaskVariants().contains(f))
                                 throw ConfigError(StrCat(
                                     "tasks.variants: unknown flag '", f, "'"));
                             c.variants = flags;
                           },
                           [](const C& c) { return JoinSet(c.variants); }};
    boolean("tasks.class_weights", [](C& c) -> bool& { return c.class_weights; });
    b["tasks.sample_weights"] = {
        "weighting",
        [](C& c, const std::string& v) {
          c.sample_weighting = Wrap("tasks.sample_weights", ParseSampleWeighting, v);
        },
        [](const C& c) { return ToString(c.sample_weighting); }};
    b["tasks.uncertainty"] = {
        "uncertainty form",
        [](C& c, const std::string& v) {
          c.uncertainty = Wrap("tasks.uncertainty", ParseUncertaintyForm, v);
        },
        [](const C& c) { return ToString(c.uncertainty); }};

    b["model.backbone"] = {"backbone",
                           [](C& c, const std::string& v) {
                             c.model.backbone = Wrap("model.backbone", ParseBackboneKind, v);
                           },
                           [](const C& c) { return ToString(c.model.backbone); }};
    integer("model.encoder_dim", [](C& c) -> Eigen::Index& { return c.model.encoder_dim; });
    integer("model.encoder_blocks", [](C& c) -> int& { return c.model.encoder_blocks; });
    integer("model.kernel", [](C& c) -> int& { return c.model.kernel; });
    integer("model.hidden_dim", [](C& c) -> Eigen::Index& { return c.model.hidden_dim; });
    boolean("model.detach_intermediate",
            [](C& c) -> bool& { return c.model.detach_intermediate; });

    for (int s = 1; s <= 2; ++s) {
      auto stage = [s](C& c) -> StageConfig& { return s == 1 ? c.stage1 : c.stage2; };
      const std::string p = StrCat("trainer.stage", s, ".");
      integer(p + "max_epochs", [stage](C& c) -> int& { return stage(c).max_epochs; });
      integer(p + "patience", [stage](C& c) -> int& { return stage(c).patience; });
      integer(p + "batch_size", [stage](C& c) -> int& { return stage(c).batch_size; });
      real(p + "grad_clip", [stage](C& c) -> double& { return stage(c).grad_clip; });
      real(p + "beta1", [stage](C& c) -> double& { return stage(c).adam.beta1; });
      real(p + "beta2", [stage](C& c) -> double& { return stage(c).adam.beta2; });
      real(p + "eps", [stage](C& c) -> double& { return stage(c).adam.eps; });
      real(p + "weight_decay",
           [stage](C& c) -> double& { return stage(c).adam.weight_decay; });
      if (s == 1) {
        real(p + "lr", [stage](C& c) -> double& { return stage(c).lr; });
      } else {
        real(p + "lr_max", [stage](C& c) -> double& { return stage(c).lr_max; });
        integer(p + "warmup_epochs",
                [stage](C& c) -> int& { return stage(c).warmup_epochs; });
      }
    }
    return b;
  }();
  return kBindings;
}

}  // namespace internal

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Parses `key = value` text into an ordered list of (dotted key, value).
inline KeyValues ParseKeyValueText(const std::string& text,
                                   const std::string& source = "<config>") {
  KeyValues out;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = internal::Trim(line);
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ConfigError(StrCat(source, ":", line_no, ": malformed section header"));
      section = internal::Trim(std::string_view(t).substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(StrCat(source, ":", line_no, ": expected key = value"));
    std::string key = internal::Trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ConfigError(StrCat(source, ":", line_no, ": empty key"));
    if (!section.empty()) key = section + "." + key;
    out.emplace_back(key, internal::Trim(std::string_view(t).substr(eq + 1)));
  }
  return out;
}

inline std::pair<std::string, std::string> ParseOverride(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError(StrCat("override '", kv, "' is not key=value"));
  return {internal::Trim(std::string_view(kv).substr(0, eq)),
          internal::Trim(std::string_view(kv).substr(eq + 1))};
}

inline void ApplyKeyValues(ExperimentConfig& cfg, const KeyValues& kvs) {
  const auto& bindings = internal::Bindings();
  for (const auto& [key, value] : kvs) {
    auto it = bindings.find(key);
    if (it == bindings.end()) throw ConfigError(StrCat("unknown key '", key, "'"));
    it->second.set(cfg, value);
  }
}

/// Checks cross-field invariants. `check_paths` also requires referenced
/// files to exist.
inline void ValidateConfig(const ExperimentConfig& cfg, bool check_paths = true) {
  if (cfg.synth == !cfg.manifest.empty())
    throw ConfigError("data: set exactly one of data.manifest or data.synth = true");
  if (cfg.synth) cfg.synth_spec.Validate();
  if (check_paths && !cfg.manifest.empty() &&
      !std::filesystem::exists(cfg.manifest))
    throw ConfigError(StrCat("data.manifest: file '", cfg.manifest, "' not found"));
  BuildTaskSet(cfg.routing, cfg.variants);
  cfg.stage1.Validate();
  cfg.stage2.Validate();
  if (cfg.stage1.stage != Stage::kHeadsOnly || cfg.stage2.stage != Stage::kFineTune)
    throw ConfigError("trainer: stage kinds are fixed (stage1 HeadsOnly, stage2 FineTune)");
}

/// Resolves a config from text plus overrides. `seed` is mandatory.
/// Relative manifest paths resolve against `base_dir`.
inline ExperimentConfig ParseConfigText(const std::string& text,
                                        const std::vector<std::string>& overrides = {},
                                        const std::filesystem::path& base_dir = {},
                                        const std::string& source = "<config>",
                                        bool check_paths = true) {
  KeyValues kvs = ParseKeyValueText(text, source);
  for (const auto& o : overrides) kvs.push_back(ParseOverride(o));
  bool has_seed = false;
  for (const auto& [k, v] : kvs) has_seed = has_seed || k == "seed";
  if (!has_seed) throw ConfigError("missing mandatory key 'seed'");
  ExperimentConfig cfg;
  ApplyKeyValues(cfg, kvs);
  if (!cfg.manifest.empty() && !base_dir.empty() &&
      std::filesystem::path(cfg.manifest).is_relative())
    cfg.manifest = (base_dir / cfg.manifest).lexically_normal().string();
  cfg.synth_spec.seed = cfg.seed;
  cfg.model.init_seed = MixSeed(cfg.seed, 17);
  ValidateConfig(cfg, check_paths);
  return cfg;
}

inline ExperimentConfig ParseConfig(const std::filesystem::path& path,
                                    const std::vector<std::string>& overrides = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError(StrCat("cannot open config '", path.string(), "'"));
  std::stringstream ss;
  ss << is.rdbuf();
  return ParseConfigText(ss.str(), overrides, path.parent_path(), path.string());
}

/// Every documented key with its current value, sectioned.
inline std::string SerializeConfig(const ExperimentConfig& cfg) {
  std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
  for (const auto& [key, binding] : internal::Bindings()) {
    const auto dot = key.find('.');
    const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string rest = dot == std::string::npos ? key : key.substr(dot + 1);
    sections[section].emplace_back(rest, binding.get(cfg));
  }
  std::ostringstream os;
  for (const auto& [k, v] : sections[""]) os << k << " = " << v << '\n';
  for (const auto& [section, entries] : sections) {
    if (section.empty()) continue;
    os << "\n[" << section << "]\n";
    for (const auto& [k, v] : entries) os << k << " = " << v << '\n';
  }
  return os.str();
}

inline std::vector<std::string> DocumentedKeys() {
  std::vector<std::string> keys;
  for (const auto& [k, b] : internal::Bindings()) keys.push_back(k);
  return keys;
}

}  // namespace vbmtl
