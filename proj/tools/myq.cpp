// SPDX-License-Identifier: Apache-2.0
// myq: mixed-precision post-training quantization of MYQM models.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "myq/calibration.hpp"
#include "myq/domain.hpp"
#include "myq/error.hpp"
#include "myq/experiment.hpp"
#include "myq/file_util.hpp"
#include "myq/metrics.hpp"
#include "myq/model_io.hpp"
#include "myq/qmodel_io.hpp"
#include "myq/report.hpp"
#include "myq/tensor_io.hpp"

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitValidation = 2;
constexpr int kExitBudget = 3;

struct Opts {
  std::string model, qmodel, calib_dir, plan, calib, out, report;
  std::string metric = "median";
  std::string rank_order = "asc";
  std::string calib_method = "minmax";
  std::string plan_transform = "none";
  std::string transform_target = "rank";
  std::string grid = "0.1,1.2";
  double budget_mb = 0.0;
  int act_bits = 8;
  int candidates = 100;
  int rounds = 3;
  int probe_bits = 8;
  std::uint64_t seed = 0;

  // make-toy / make-calib / ab
  std::size_t layers = 2, hidden = 64, heads = 4, ffn = 256, vocab = 32, frames = 64, in_channels = 16;
  std::size_t count = 32, eval_count = 8;
  double scale_first = 1.0, scale_second = 1.0;
  double scale_a = 0.2, scale_b = 5.0;
  bool split_channels = false;
  std::string preset = "default";
};

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::pair<double, double> parse_grid(const std::string& s) {
  const auto comma = s.find(',');
  if (comma == std::string::npos) throw myq::ConfigError("--grid expects LO,HI, got '" + s + "'");
  return {myq::parse_decimal(s.substr(0, comma)), myq::parse_decimal(s.substr(comma + 1))};
}

myq::calib::CalibConfig calib_config(const Opts& o) {
  myq::calib::CalibConfig c;
  c.method = myq::calib::method_from_string(o.calib_method);
  c.act_bits = o.act_bits;
  c.candidates = o.candidates;
  c.rounds = o.rounds;
  std::tie(c.grid_lo, c.grid_hi) = parse_grid(o.grid);
  c.validate();
  return c;
}

myq::PipelineConfig pipeline_config(const Opts& o) {
  myq::PipelineConfig p;
  p.budget_mb = o.budget_mb;
  p.metric = myq::metric_from_string(o.metric);
  p.order = myq::sens::rank_order_from_string(o.rank_order);
  p.transform = myq::sens::plan_transform_from_string(o.plan_transform);
  p.transform_bits = o.transform_target == "bits";
  p.probe_bits = o.probe_bits;
  p.calib = calib_config(o);
  p.seed = o.seed;
  return p;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw myq::UsageError(std::string(flag) + " is required");
}

/// Replaces the given sections of the report at `path` (when set).
void update_report(const std::string& path, const std::function<void(myq::Report&)>& fill, const char* command,
                   double seconds) {
  if (path.empty()) return;
  auto r = myq::load_or_empty_report(path);
  fill(r);
  const auto timing = r.environment.contains("timing") ? r.environment["timing"] : json::object();
  r.environment = myq::environment_section();
  r.environment["timing"] = timing;
  r.environment["timing"][command] = seconds;
  myq::save_report(r, path);
}

json read_json(const std::string& path) {
  const auto b = myq::read_file(path);
  try {
    return json::parse(b.begin(), b.end());
  } catch (const json::exception& e) {
    throw myq::FormatError(path + ": " + e.what(), 0);
  }
}

void write_json(const std::string& path, const json& j) { myq::write_text_atomic(path, j.dump(2) + "\n"); }

bool has_magic(const std::string& path, std::string_view magic) {
  const auto b = myq::read_file(path);
  return b.size() >= 4 && std::string_view(reinterpret_cast<const char*>(b.data()), 4) == magic;
}

// Commands.

int cmd_make_toy(const Opts& o) {
  require(o.out, "--out");
  myq::ToyConfig c;
  c.layers = o.layers;
  c.hidden = o.hidden;
  c.heads = o.heads;
  c.ffn_dim = o.ffn;
  c.vocab = o.vocab;
  c.frames = o.frames;
  c.in_channels = o.in_channels;
  const auto m = myq::build_toy_encoder(c, o.seed);
  myq::save_model(m, o.out);
  print_json(myq::model_section(m));
  return kExitOk;
}

int cmd_make_calib(const Opts& o) {
  require(o.model, "--model");
  require(o.out, "--out");
  const auto m = myq::load_model(o.model);
  auto d = myq::split_scaled_domain(m.config.in_channels, m.config.frames, o.count, o.seed, o.scale_first,
                                    o.scale_second);
  d.dtype = m.config.dtype;
  myq::save_sample_set(o.out, myq::make_domain(d));
  print_json({{"dir", o.out}, {"count", o.count}, {"seed", o.seed}});
  return kExitOk;
}

int cmd_inspect(const Opts& o) {
  const std::string path = !o.model.empty() ? o.model : o.qmodel;
  require(path, "--model");
  if (has_magic(path, "MYQZ")) {
    const auto q = myq::quant::load_quantized(path);
    json layers = json::array();
    for (const auto& l : q.layers)
      layers.push_back({{"index", l.index}, {"bits", l.bits}, {"act", myq::quant::act_params_to_json(l.act)}});
    print_json({{"format", "MYQZ"},
                {"model", myq::model_section(q.graph)},
                {"source_fingerprint", q.source_fingerprint},
                {"plan", myq::plan_to_json(q.plan)},
                {"weight_payload_bits", q.weight_payload_bits()},
                {"layers", layers}});
  } else {
    const auto m = myq::load_model(path);
    json j = myq::model_section(m);
    j["format"] = "MYQM";
    j["fp_size_mb"] = myq::decimal_string(myq::uniform_size_mb(m, 32));
    j["floor_size_mb"] = myq::decimal_string(myq::uniform_size_mb(m, 1));
    print_json(j);
  }
  return kExitOk;
}

int cmd_sense(const Opts& o) {
  require(o.model, "--model");
  require(o.calib_dir, "--calib-dir");
  const auto t0 = Clock::now();
  const auto cfg = pipeline_config(o);
  const auto m = myq::load_model(o.model);
  const auto samples = myq::load_sample_set(o.calib_dir);
  const auto stats = myq::sens::observe(m, samples, {myq::sens::kDefaultMedianCap, cfg.seed});
  const auto rank = myq::compute_rank(m, samples, stats, cfg);
  const auto plan = myq::make_plan(m, rank, cfg);
  const json plan_json = myq::plan_section(plan, cfg);
  if (!o.out.empty()) write_json(o.out, plan_json);
  update_report(
      o.report,
      [&](myq::Report& r) {
        r.model = myq::model_section(m);
        r.sensitivity = myq::sensitivity_section(stats, rank, cfg);
        r.plan = plan_json;
      },
      "sense", seconds_since(t0));
  print_json(plan_json);
  return kExitOk;
}

int cmd_calibrate(const Opts& o) {
  require(o.model, "--model");
  require(o.calib_dir, "--calib-dir");
  require(o.plan, "--plan");
  const auto t0 = Clock::now();
  const auto cfg = pipeline_config(o);
  const auto m = myq::load_model(o.model);
  const auto samples = myq::load_sample_set(o.calib_dir);
  const auto plan = myq::plan_from_json(read_json(o.plan));
  if (plan.bits.size() != m.num_layers()) throw myq::DimensionError("plan does not match the model's layer count");
  const auto stats = myq::sens::observe(m, samples, {myq::sens::kDefaultMedianCap, cfg.seed});
  const auto result = myq::calib::calibrate(m, samples, stats, plan, cfg.calib);
  const json cj = myq::calib_to_json(result, cfg.calib);
  if (!o.out.empty()) write_json(o.out, cj);
  update_report(o.report, [&](myq::Report& r) { r.calibration = cj; }, "calibrate", seconds_since(t0));
  print_json({{"method", myq::calib::to_string(result.method)}, {"layers", result.layers.size()},
              {"seconds", result.seconds}});
  return kExitOk;
}

int cmd_quantize(const Opts& o) {
  require(o.model, "--model");
  require(o.plan, "--plan");
  require(o.out, "--out");
  const auto t0 = Clock::now();
  const auto m = myq::load_model(o.model);
  const auto plan = myq::plan_from_json(read_json(o.plan));
  std::vector<myq::quant::ActParams> act(m.num_layers(), myq::quant::FloatPassthrough{});
  if (!o.calib.empty()) act = myq::calib_from_json(read_json(o.calib)).params();
  const auto q = myq::quant::quantize_model(m, plan, act);
  myq::quant::save_quantized(q, o.out);
  const json summary = {{"out", o.out},
                        {"source_fingerprint", q.source_fingerprint},
                        {"weight_payload_bits", q.weight_payload_bits()},
                        {"size_mb", myq::decimal_string(q.plan.size_mb)}};
  update_report(o.report, [](myq::Report&) {}, "quantize", seconds_since(t0));
  print_json(summary);
  return kExitOk;
}

int cmd_eval(const Opts& o) {
  require(o.model, "--model");
  require(o.qmodel, "--qmodel");
  require(o.calib_dir, "--calib-dir");
  const auto t0 = Clock::now();
  const auto m = myq::load_model(o.model);
  const auto q = myq::quant::load_quantized(o.qmodel);
  if (q.source_fingerprint != myq::model_fingerprint(m))
    throw myq::ValidationError("quantized model was not produced from " + o.model);
  const auto samples = myq::load_sample_set(o.calib_dir);
  const auto e = myq::evaluate(m, q, samples);
  const json ej = myq::eval_to_json(e);
  if (!o.out.empty()) write_json(o.out, ej);
  update_report(o.report, [&](myq::Report& r) { r.eval = ej; }, "eval", seconds_since(t0));
  print_json(ej);
  return kExitOk;
}

int cmd_ab(const Opts& o) {
  require(o.model, "--model");
  const auto t0 = Clock::now();
  const auto m = myq::load_model(o.model);
  auto cfg = pipeline_config(o);
  myq::AbConfig ab{cfg, o.eval_count};
  const std::size_t C = m.config.in_channels;
  // Domain A scales every channel by scale_a and B by scale_b; with
  // --split-channels each domain emphasises a different half of the channels.
  const double a2 = o.split_channels ? o.scale_b : o.scale_a;
  const double b2 = o.split_channels ? o.scale_a : o.scale_b;
  auto a = myq::split_scaled_domain(C, m.config.frames, o.count, o.seed, o.scale_a, a2);
  auto b = myq::split_scaled_domain(C, m.config.frames, o.count, o.seed + 1, o.scale_b, b2);
  a.dtype = b.dtype = m.config.dtype;
  const double budget = o.budget_mb > 0.0 ? o.budget_mb : myq::uniform_size_mb(m, 6);
  const auto r = myq::ab_experiment(m, a, b, budget, ab);
  json cells = json::array();
  const char* names[] = {"A", "B"};
  for (int c = 0; c < 2; ++c)
    for (int e = 0; e < 2; ++e) {
      json cell = myq::eval_to_json(r.cell[c][e]);
      cell["calibrated_on"] = names[c];
      cell["evaluated_on"] = names[e];
      cells.push_back(cell);
    }
  const json out = {{"budget_mb", myq::decimal_string(budget)},
                    {"plans", {myq::plan_to_json(r.plans[0]), myq::plan_to_json(r.plans[1])}},
                    {"matrix", cells}};
  if (!o.out.empty()) write_json(o.out, out);
  update_report(
      o.report,
      [&](myq::Report& rep) {
        rep.model = myq::model_section(m);
        rep.eval = out;
      },
      "ab", seconds_since(t0));
  print_json(out);
  return kExitOk;
}

int cmd_report(const Opts& o) {
  require(o.report, "--report");
  const auto r = myq::load_report(o.report);
  json sections = json::array();
  for (const char* s : {"model", "sensitivity", "plan", "calibration", "eval"}) {
    const json& j = s == std::string_view("model")         ? r.model
                    : s == std::string_view("sensitivity") ? r.sensitivity
                    : s == std::string_view("plan")        ? r.plan
                    : s == std::string_view("calibration") ? r.calibration
                                                           : r.eval;
    if (!j.empty()) sections.push_back(s);
  }
  json out = {{"hash", myq::report_hash(r)}, {"sections", sections}};
  if (!r.eval.empty()) out["eval"] = r.eval;
  if (!r.plan.empty()) out["plan"] = r.plan;
  print_json(out);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"myq: mixed-precision post-training quantization"};
  app.require_subcommand(1);
  Opts o;

  auto add_model = [&](CLI::App* c) { c->add_option("--model", o.model, "MYQM model file"); };
  auto add_common = [&](CLI::App* c) {
    c->add_option("--seed", o.seed, "Random seed");
    c->add_option("--out", o.out, "Output file");
    c->add_option("--report", o.report, "Report JSON to create or update");
  };
  auto add_sense = [&](CLI::App* c) {
    c->add_option("--budget-mb", o.budget_mb, "Weight budget in MB");
    c->add_option("--metric", o.metric, "Sensitivity metric")
        ->check(CLI::IsMember({"avg", "median", "max", "max_abs", "std", "l1", "l2", "sn", "frob", "kl"}));
    c->add_option("--rank-order", o.rank_order, "Order of the sensitivity sweep")
        ->check(CLI::IsMember({"asc", "desc"}));
    c->add_option("--plan-transform", o.plan_transform, "Permute the rank before allocation")
        ->check(CLI::IsMember({"none", "shuffle", "reverse"}));
    c->add_option("--transform-target", o.transform_target, "What --plan-transform permutes")
        ->check(CLI::IsMember({"rank", "bits"}));
    c->add_option("--probe-bits", o.probe_bits, "Bit depth of the weight probe for distance metrics");
  };
  auto add_calib = [&](CLI::App* c) {
    c->add_option("--calib-method", o.calib_method, "Activation calibration method")
        ->check(CLI::IsMember({"none", "minmax", "l1", "l2", "linw_l2", "sqw_l2", "hess", "cosine"}));
    c->add_option("--act-bits", o.act_bits, "Activation bit depth");
    c->add_option("--candidates", o.candidates, "Scale candidates per search");
    c->add_option("--rounds", o.rounds, "Alternating rounds for two-range layers");
    c->add_option("--grid", o.grid, "Scale multiplier range LO,HI");
  };

  auto* make_toy = app.add_subcommand("make-toy", "Build a random toy encoder");
  add_common(make_toy);
  make_toy->add_option("--layers", o.layers, "Transformer blocks");
  make_toy->add_option("--hidden", o.hidden, "Hidden width");
  make_toy->add_option("--heads", o.heads, "Attention heads");
  make_toy->add_option("--ffn", o.ffn, "Feed-forward width");
  make_toy->add_option("--vocab", o.vocab, "Output vocabulary");
  make_toy->add_option("--frames", o.frames, "Input length");
  make_toy->add_option("--in-channels", o.in_channels, "Input channels");

  auto* make_calib = app.add_subcommand("make-calib", "Write a synthetic MYQT sample set");
  add_model(make_calib);
  add_common(make_calib);
  auto* calib_count = make_calib->add_option("--count", o.count, "Number of samples");
  make_calib->add_option("--scale-first", o.scale_first, "Scale of the first half of the channels");
  make_calib->add_option("--scale-second", o.scale_second, "Scale of the second half of the channels");

  auto* inspect = app.add_subcommand("inspect", "Describe a MYQM or MYQZ file");
  add_model(inspect);
  inspect->add_option("--qmodel", o.qmodel, "MYQZ file");

  auto* sense = app.add_subcommand("sense", "Rank layers and allocate bit depths");
  add_model(sense);
  add_common(sense);
  add_sense(sense);
  sense->add_option("--calib-dir", o.calib_dir, "Calibration sample directory");

  auto* calibrate = app.add_subcommand("calibrate", "Calibrate activation scales for a plan");
  add_model(calibrate);
  add_common(calibrate);
  add_calib(calibrate);
  calibrate->add_option("--calib-dir", o.calib_dir, "Calibration sample directory");
  calibrate->add_option("--plan", o.plan, "Plan JSON written by sense");

  auto* quantize = app.add_subcommand("quantize", "Assemble a MYQZ quantized model");
  add_model(quantize);
  add_common(quantize);
  quantize->add_option("--plan", o.plan, "Plan JSON written by sense");
  quantize->add_option("--calib", o.calib, "Calibration JSON (activations stay float without it)");

  auto* eval = app.add_subcommand("eval", "Compare a quantized model with its source");
  add_model(eval);
  add_common(eval);
  eval->add_option("--qmodel", o.qmodel, "MYQZ file");
  eval->add_option("--calib-dir", o.calib_dir, "Evaluation sample directory");

  auto* ab = app.add_subcommand("ab", "Two-domain calibration/evaluation matrix");
  add_model(ab);
  add_common(ab);
  add_sense(ab);
  add_calib(ab);
  auto* ab_count = ab->add_option("--count", o.count, "Calibration samples per domain");
  ab->add_option("--eval-count", o.eval_count, "Evaluation samples per domain");
  ab->add_option("--scale-a", o.scale_a, "Channel scale of domain A");
  ab->add_option("--scale-b", o.scale_b, "Channel scale of domain B");
  ab->add_flag("--split-channels", o.split_channels,
               "Scale only the first half of the channels by the domain's own factor, the rest by the other's");

  // "speaker" uses 5 calibration samples unless --count is given.
  for (auto* c : {make_calib, ab})
    c->add_option("--preset", o.preset, "Sample-count preset")->check(CLI::IsMember({"default", "speaker"}));

  auto* report = app.add_subcommand("report", "Summarize a report and print its hash");
  report->add_option("--report", o.report, "Report JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  if (o.preset == "speaker" && calib_count->count() == 0 && ab_count->count() == 0) o.count = 5;

  try {
    if (*make_toy) return cmd_make_toy(o);
    if (*make_calib) return cmd_make_calib(o);
    if (*inspect) return cmd_inspect(o);
    if (*sense) return cmd_sense(o);
    if (*calibrate) return cmd_calibrate(o);
    if (*quantize) return cmd_quantize(o);
    if (*eval) return cmd_eval(o);
    if (*ab) return cmd_ab(o);
    if (*report) return cmd_report(o);
  } catch (const myq::BudgetError& e) {
    std::cerr << "myq: " << e.what() << "\n";
    return kExitBudget;
  } catch (const myq::ValidationError& e) {
    std::cerr << "myq: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "myq: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitValidation;
}
