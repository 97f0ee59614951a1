// SPDX-License-Identifier: Apache-2.0
#include "myq/report.hpp"

#include "myq/error.hpp"
#include "myq/file_util.hpp"
#include "myq/model_io.hpp"
#include "myq/parallel.hpp"
#include "myq/qmodel_io.hpp"

namespace myq {

using nlohmann::json;

namespace {

constexpr const char* kSections[] = {"model", "sensitivity", "plan", "calibration", "eval", "environment"};

json& section(Report& r, std::string_view name) {
  if (name == "model") return r.model;
  if (name == "sensitivity") return r.sensitivity;
  if (name == "plan") return r.plan;
  if (name == "calibration") return r.calibration;
  if (name == "eval") return r.eval;
  return r.environment;
}

const json& section(const Report& r, std::string_view name) { return section(const_cast<Report&>(r), name); }

json dec(double v) { return decimal_string(v); }
double undec(const json& j) { return parse_decimal(j.get<std::string>()); }

json decs(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(dec(x));
  return a;
}

std::vector<double> undecs(const json& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(undec(x));
  return v;
}

json hashed_view(const Report& r) {
  json h = json::object();
  for (const char* s : kSections)
    if (std::string_view(s) != "environment") h[s] = section(r, s);
  return h;
}

}  // namespace

std::string emit_report(const Report& r) {
  json j = json::object();
  for (const char* s : kSections) j[s] = section(r, s);
  j["hash"] = report_hash(r);
  return j.dump(2) + "\n";
}

Report parse_report(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: ") + e.what(), 0);
  }
  if (!j.is_object()) throw FormatError("report must be a JSON object", 0);
  Report r;
  for (const char* s : kSections)
    if (j.contains(s)) section(r, s) = j[s];
  return r;
}

std::string report_hash(const Report& r) { return hex64(fnv1a64(hashed_view(r).dump())); }

void save_report(const Report& r, const std::filesystem::path& path) { write_text_atomic(path, emit_report(r)); }

Report load_report(const std::filesystem::path& path) {
  const auto b = read_file(path);
  return parse_report(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
}

Report load_or_empty_report(const std::filesystem::path& path) {
  return std::filesystem::exists(path) ? load_report(path) : Report{};
}

json model_section(const ModelGraph& model) {
  json layers = json::array();
  for (const auto& l : model.layers)
    layers.push_back({{"index", l.index},
                      {"kind", to_string(l.kind)},
                      {"params", l.param_count()},
                      {"quantizable", l.quantizable}});
  std::size_t total = 0;
  for (auto n : param_count(model)) total += n;
  return {{"name", model.name},
          {"fingerprint", model_fingerprint(model)},
          {"seed", model.seed},
          {"config", config_to_json(model.config)},
          {"layer_params", total},
          {"norm_params", norm_param_count(model)},
          {"layers", layers}};
}

json stats_to_json(std::span<const sens::LayerStats> stats) {
  json a = json::array();
  for (const auto& s : stats)
    a.push_back({{"layer", s.layer},
                 {"min", dec(s.min)},
                 {"max", dec(s.max)},
                 {"median", dec(s.median)},
                 {"mean", dec(s.mean)},
                 {"max_abs", dec(s.max_abs)},
                 {"std", dec(s.std)},
                 {"count", s.count},
                 {"median_population", s.median_population},
                 {"input_min", dec(s.input_min)},
                 {"input_max", dec(s.input_max)},
                 {"input_max_abs", dec(s.input_max_abs)}});
  return a;
}

std::vector<sens::LayerStats> stats_from_json(const json& j) {
  std::vector<sens::LayerStats> out;
  for (const auto& e : j) {
    sens::LayerStats s;
    s.layer = e.at("layer").get<int>();
    s.min = undec(e.at("min"));
    s.max = undec(e.at("max"));
    s.median = undec(e.at("median"));
    s.mean = undec(e.at("mean"));
    s.max_abs = undec(e.at("max_abs"));
    s.std = undec(e.at("std"));
    s.count = e.at("count").get<std::size_t>();
    s.median_population = e.at("median_population").get<std::size_t>();
    s.input_min = undec(e.at("input_min"));
    s.input_max = undec(e.at("input_max"));
    s.input_max_abs = undec(e.at("input_max_abs"));
    out.push_back(s);
  }
  return out;
}

json rank_to_json(const sens::SensitivityRank& r) {
  return {{"metric", r.metric}, {"order", r.order}, {"values", decs(r.values)}};
}

sens::SensitivityRank rank_from_json(const json& j) {
  sens::SensitivityRank r;
  r.metric = j.at("metric").get<std::string>();
  r.order = j.at("order").get<std::vector<int>>();
  r.values = undecs(j.at("values"));
  return r;
}

json plan_to_json(const sens::BitPlan& p) {
  return {{"bits", p.bits}, {"size_mb", dec(p.size_mb)}, {"last_decremented", p.last_decremented}};
}

sens::BitPlan plan_from_json(const json& j) {
  sens::BitPlan p;
  p.bits = j.at("bits").get<std::vector<int>>();
  p.size_mb = undec(j.at("size_mb"));
  p.last_decremented = j.at("last_decremented").get<int>();
  return p;
}

json calib_to_json(const calib::CalibResult& c, const calib::CalibConfig& cfg) {
  json layers = json::array();
  for (const auto& l : c.layers)
    layers.push_back({{"act", quant::act_params_to_json(l.params)},
                      {"objective", dec(l.objective)},
                      {"base_objective", dec(l.base_objective)},
                      {"round_objectives", decs(l.round_objectives)}});
  return {{"method", calib::to_string(c.method)},
          {"act_bits", cfg.act_bits},
          {"candidates", cfg.candidates},
          {"rounds", cfg.rounds},
          {"grid", {dec(cfg.grid_lo), dec(cfg.grid_hi)}},
          {"layers", layers}};
}

calib::CalibResult calib_from_json(const json& j) {
  calib::CalibResult c;
  try {
    c.method = calib::method_from_string(j.at("method").get<std::string>());
    for (const auto& e : j.at("layers")) {
      calib::LayerCalib l;
      l.params = quant::act_params_from_json(e.at("act"));
      l.objective = undec(e.at("objective"));
      l.base_objective = undec(e.at("base_objective"));
      l.round_objectives = undecs(e.at("round_objectives"));
      c.layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("calibration JSON: ") + e.what(), 0);
  }
  return c;
}

json eval_to_json(const EvalResult& e) {
  return {{"wer", dec(e.wer)},
          {"cer", dec(e.cer)},
          {"accuracy", dec(e.accuracy)},
          {"fidelity", dec(e.fidelity)},
          {"mean_cosine_distance", dec(e.mean_cosine_distance)},
          {"samples", e.samples},
          {"frames", e.frames}};
}

EvalResult eval_from_json(const json& j) {
  EvalResult e;
  e.wer = undec(j.at("wer"));
  e.cer = undec(j.at("cer"));
  e.accuracy = undec(j.at("accuracy"));
  e.fidelity = undec(j.at("fidelity"));
  e.mean_cosine_distance = undec(j.at("mean_cosine_distance"));
  e.samples = j.at("samples").get<std::size_t>();
  e.frames = j.at("frames").get<std::size_t>();
  return e;
}

json environment_section() {
  json env = json::object();
  env["threads"] = worker_count();
#if defined(__clang__)
  env["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
  env["compiler"] = std::string("gcc ") + __VERSION__;
#else
  env["compiler"] = "unknown";
#endif
  env["cxx_standard"] = static_cast<long>(__cplusplus);
  return env;
}

json sensitivity_section(std::span<const sens::LayerStats> stats, const sens::SensitivityRank& rank,
                         const PipelineConfig& cfg) {
  return {{"metric", to_string(cfg.metric)},
          {"rank_order", sens::to_string(cfg.order)},
          {"probe_bits", cfg.probe_bits},
          {"seed", cfg.seed},
          {"stats", stats_to_json(stats)},
          {"rank", rank_to_json(rank)}};
}

json plan_section(const sens::BitPlan& plan, const PipelineConfig& cfg) {
  json j = plan_to_json(plan);
  j["budget_mb"] = dec(cfg.budget_mb);
  j["transform"] = sens::to_string(cfg.transform);
  j["transform_target"] = cfg.transform_bits ? "bits" : "rank";
  return j;
}

Report pipeline_report(const ModelGraph& model, const PipelineResult& p, const PipelineConfig& cfg,
                       const EvalResult& eval) {
  Report r;
  r.model = model_section(model);
  r.sensitivity = sensitivity_section(p.stats, p.rank, cfg);
  r.plan = plan_section(p.plan, cfg);
  r.calibration = calib_to_json(p.calib, cfg.calib);
  r.eval = eval_to_json(eval);
  r.environment = environment_section();
  r.environment["calibration_seconds"] = p.calib.seconds;
  return r;
}

}  // namespace myq
