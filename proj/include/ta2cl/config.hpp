// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ta2cl/core/error.hpp"
#include "ta2cl/data_synth.hpp"
#include "ta2cl/pipeline/experiment.hpp"

namespace ta2cl {

using json = nlohmann::ordered_json;

namespace detail {

// Reads fields from one JSON object, remembering which keys were used so
// leftovers can be rejected.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    used_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
        out = it->template get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("");
        if (std::is_unsigned_v<T> && it->is_number_integer() && !it->is_number_unsigned()) throw ConfigError("");
        out = it->template get<T>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
        out = it->template get<T>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("");
        out = it->template get<std::string>();
      } else {
        out = it->template get<T>();
      }
    } catch (const ConfigError&) {
      throw ConfigError(where(key) + ": wrong type (" + std::string(it->type_name()) + ")");
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  /// Sub-object or null when absent.
  const json* child(const char* key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError("unknown key '" + where(it.key()) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

template <class F>
void with_child(ObjectReader& r, const char* key, const std::string& path, F&& f) {
  if (const json* c = r.child(key)) {
    ObjectReader sub(*c, path.empty() ? key : path + "." + key);
    f(sub);
    sub.finish();
  }
}

inline Aggregation aggregation_from(const std::string& s, const std::string& where) {
  try {
    return parse_aggregation(s);
  } catch (const ValueError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace detail

inline json to_json(const EncoderConfig& c) {
  return {{"channels", c.channels},
          {"n_time_filters", c.n_time_filters},
          {"time_filter_len", c.time_filter_len},
          {"n_ms_filters", c.n_ms_filters},
          {"ms_filter_time_len", c.ms_filter_time_len},
          {"dilation_array", c.dilation_array},
          {"avg_pool_len", c.avg_pool_len},
          {"time_smoother_len", c.time_smoother_len},
          {"dropout", c.dropout},
          {"attention_enabled", c.attention_enabled},
          {"attention_hidden", c.attention_hidden},
          {"projector_dim", c.projector_dim},
          {"zcls_pooling", c.zcls_pooling == ZclsPooling::Mean ? "mean" : "none"}};
}

inline void read_encoder(detail::ObjectReader& r, EncoderConfig& c) {
  r.get("channels", c.channels);
  r.get("n_time_filters", c.n_time_filters);
  r.get("time_filter_len", c.time_filter_len);
  r.get("n_ms_filters", c.n_ms_filters);
  r.get("ms_filter_time_len", c.ms_filter_time_len);
  std::vector<std::size_t> dil(c.dilation_array.begin(), c.dilation_array.end());
  r.get("dilation_array", dil);
  if (dil.size() != 4) throw ConfigError(r.where("dilation_array") + ": expected 4 entries");
  std::copy(dil.begin(), dil.end(), c.dilation_array.begin());
  r.get("avg_pool_len", c.avg_pool_len);
  r.get("time_smoother_len", c.time_smoother_len);
  r.get("dropout", c.dropout);
  r.get("attention_enabled", c.attention_enabled);
  r.get("attention_hidden", c.attention_hidden);
  r.get("projector_dim", c.projector_dim);
  std::string pooling = c.zcls_pooling == ZclsPooling::Mean ? "mean" : "none";
  r.get("zcls_pooling", pooling);
  if (pooling == "mean") {
    c.zcls_pooling = ZclsPooling::Mean;
  } else if (pooling == "none") {
    c.zcls_pooling = ZclsPooling::None;
  } else {
    throw ConfigError(r.where("zcls_pooling") + ": expected mean or none");
  }
}

inline json to_json(const AsyncSimConfig& c) {
  return {{"k", c.k},
          {"topk_aggregation", to_string(c.topk_agg)},
          {"token_aggregation", to_string(c.token_agg)},
          {"normalize_tokens", c.normalize_tokens},
          {"symmetric", c.symmetric}};
}

inline void read_similarity(detail::ObjectReader& r, AsyncSimConfig& c) {
  r.get("k", c.k);
  std::string topk = to_string(c.topk_agg), token = to_string(c.token_agg);
  r.get("topk_aggregation", topk);
  r.get("token_aggregation", token);
  c.topk_agg = detail::aggregation_from(topk, r.where("topk_aggregation"));
  c.token_agg = detail::aggregation_from(token, r.where("token_aggregation"));
  r.get("normalize_tokens", c.normalize_tokens);
  r.get("symmetric", c.symmetric);
}

inline json to_json(const TrainSchedule& s) {
  return {{"batch_size", s.batch_size},
          {"pretrain",
           {{"lr", s.pretrain.lr},
            {"weight_decay", s.pretrain.weight_decay},
            {"epochs", s.pretrain.epochs},
            {"steps_per_epoch", s.pretrain.steps_per_epoch}}},
          {"classify",
           {{"lr", s.classify.lr},
            {"weight_decay", s.classify.weight_decay},
            {"max_epochs", s.classify.max_epochs},
            {"min_epochs", s.classify.min_epochs},
            {"patience", s.classify.patience},
            {"hidden", s.classify.hidden},
            {"batch_size", s.classify.batch_size},
            {"val_fraction", s.classify.val_fraction}}}};
}

inline void read_schedule(detail::ObjectReader& r, TrainSchedule& s, const std::string& path) {
  r.get("batch_size", s.batch_size);
  detail::with_child(r, "pretrain", path, [&](detail::ObjectReader& p) {
    p.get("lr", s.pretrain.lr);
    p.get("weight_decay", s.pretrain.weight_decay);
    p.get("epochs", s.pretrain.epochs);
    p.get("steps_per_epoch", s.pretrain.steps_per_epoch);
  });
  detail::with_child(r, "classify", path, [&](detail::ObjectReader& c) {
    c.get("lr", s.classify.lr);
    c.get("weight_decay", s.classify.weight_decay);
    c.get("max_epochs", s.classify.max_epochs);
    c.get("min_epochs", s.classify.min_epochs);
    c.get("patience", s.classify.patience);
    c.get("hidden", s.classify.hidden);
    c.get("batch_size", s.classify.batch_size);
    c.get("val_fraction", s.classify.val_fraction);
  });
}

inline json to_json(const SynthSpec& s) {
  return {{"n_subjects", s.n_subjects},
          {"n_stimuli", s.n_stimuli},
          {"n_classes", s.n_classes},
          {"channels", s.channels},
          {"sample_rate", s.sample_rate},
          {"window_len", s.window_len},
          {"pattern_len", s.pattern_len},
          {"max_latency_shift", s.max_latency_shift},
          {"noise_sigma", s.noise_sigma},
          {"subject_gain_range", {s.subject_gain_range.first, s.subject_gain_range.second}},
          {"windows_per_trial", s.windows_per_trial},
          {"stimulus_variation", s.stimulus_variation},
          {"noise_ar", s.noise_ar}};
}

inline void read_synth(detail::ObjectReader& r, SynthSpec& s) {
  r.get("n_subjects", s.n_subjects);
  r.get("n_stimuli", s.n_stimuli);
  r.get("n_classes", s.n_classes);
  r.get("channels", s.channels);
  r.get("sample_rate", s.sample_rate);
  r.get("window_len", s.window_len);
  r.get("pattern_len", s.pattern_len);
  r.get("max_latency_shift", s.max_latency_shift);
  r.get("noise_sigma", s.noise_sigma);
  std::vector<double> gain{s.subject_gain_range.first, s.subject_gain_range.second};
  r.get("subject_gain_range", gain);
  if (gain.size() != 2) throw ConfigError(r.where("subject_gain_range") + ": expected [lo, hi]");
  s.subject_gain_range = {gain[0], gain[1]};
  r.get("windows_per_trial", s.windows_per_trial);
  r.get("stimulus_variation", s.stimulus_variation);
  r.get("noise_ar", s.noise_ar);
}

inline json to_json(const ExperimentConfig& c) {
  return {{"experiment", c.name},
          {"seed", c.seed},
          {"encoder", to_json(c.encoder)},
          {"similarity", to_json(c.loss.sim)},
          {"loss", {{"tau", c.loss.tau}, {"mode", to_string(c.loss.mode)}}},
          {"schedule", to_json(c.schedule)},
          {"smoothing",
           {{"method", to_string(c.smoothing.method)},
            {"noise_ratio", c.smoothing.noise_ratio},
            {"ma_window", c.smoothing.ma_window}}},
          {"folds", {{"protocol", to_string(c.protocol)}, {"k", c.k_folds}}},
          {"shuffle_labels", c.shuffle_labels}};
}

/// Full configuration of one CLI invocation.
struct RunConfig {
  ExperimentConfig experiment;
  SynthSpec synth;
  std::string data_dir;
  std::string out_dir;
  std::string checkpoint;
  std::size_t jobs = 1;

  /// Applies the single top-level seed everywhere it is consumed.
  void set_seed(std::uint64_t seed) {
    experiment.seed = seed;
    synth.seed = seed;
  }

  void validate() const {
    experiment.validate();
    synth.validate();
    if (jobs < 1) throw ConfigError("jobs must be >= 1");
  }
};

inline json to_json(const RunConfig& c) {
  json j = to_json(c.experiment);
  j["paths"] = {{"data_dir", c.data_dir}, {"out_dir", c.out_dir}, {"checkpoint", c.checkpoint}};
  j["synth"] = to_json(c.synth);
  j["jobs"] = c.jobs;
  return j;
}

/// Strict parse: every key must be known; absent keys keep their defaults.
/// Validates the result.
inline RunConfig parse_run_config(const json& j) {
  RunConfig c;
  detail::ObjectReader r(j, "");
  r.get("experiment", c.experiment.name);
  std::uint64_t seed = 0;
  r.get("seed", seed);
  c.set_seed(seed);
  detail::with_child(r, "paths", "", [&](detail::ObjectReader& p) {
    p.get("data_dir", c.data_dir);
    p.get("out_dir", c.out_dir);
    p.get("checkpoint", c.checkpoint);
  });
  detail::with_child(r, "encoder", "", [&](detail::ObjectReader& e) { read_encoder(e, c.experiment.encoder); });
  detail::with_child(r, "similarity", "", [&](detail::ObjectReader& s) { read_similarity(s, c.experiment.loss.sim); });
  detail::with_child(r, "loss", "", [&](detail::ObjectReader& l) {
    l.get("tau", c.experiment.loss.tau);
    std::string mode = to_string(c.experiment.loss.mode);
    l.get("mode", mode);
    try {
      c.experiment.loss.mode = parse_loss_mode(mode);
    } catch (const ValueError& e) {
      throw ConfigError(std::string("loss.mode: ") + e.what());
    }
  });
  detail::with_child(r, "schedule", "", [&](detail::ObjectReader& s) { read_schedule(s, c.experiment.schedule, "schedule"); });
  detail::with_child(r, "smoothing", "", [&](detail::ObjectReader& s) {
    std::string method = to_string(c.experiment.smoothing.method);
    s.get("method", method);
    c.experiment.smoothing.method = parse_smooth_method(method);
    s.get("noise_ratio", c.experiment.smoothing.noise_ratio);
    s.get("ma_window", c.experiment.smoothing.ma_window);
  });
  detail::with_child(r, "folds", "", [&](detail::ObjectReader& f) {
    std::string protocol = to_string(c.experiment.protocol);
    f.get("protocol", protocol);
    c.experiment.protocol = parse_fold_protocol(protocol);
    f.get("k", c.experiment.k_folds);
  });
  detail::with_child(r, "synth", "", [&](detail::ObjectReader& s) { read_synth(s, c.synth); });
  r.get("jobs", c.jobs);
  r.get("shuffle_labels", c.experiment.shuffle_labels);
  r.finish();
  c.synth.seed = seed;
  c.validate();
  return c;
}

inline RunConfig parse_run_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

}  // namespace ta2cl
