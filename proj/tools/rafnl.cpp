// rafnl: command-line front end for simulation, registration/fusion,
// refinement and metrics.
//
// Exit codes: 0 ok, 1 usage, 2 data/numerical error, 3 non-convergence
// (outputs are still written).

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rafnl/config.hpp"
#include "rafnl/degradation.hpp"
#include "rafnl/io.hpp"
#include "rafnl/metrics.hpp"
#include "rafnl/nlrgs.hpp"
#include "rafnl/raf.hpp"
#include "rafnl/simulate.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace rafnl;

namespace {

constexpr int kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNoConv = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string y, z, gt, x, ref, warm, out_dir = ".", config, profile = "default";
  std::string kernel, response, kind = "translation", warp, out;
  std::vector<std::string> sets;
  std::uint64_t seed = 7;
  double magnitude = 2.0;
  std::optional<double> snr, tol;
  std::optional<int> max_iter;
  double d = 0.0;
  Index factor = 0, kernel_size = 5;
  double lambda_r = 1e-3, lambda_b = 1e-3;
  bool timing = false;
};

Cube load(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string("missing required ") + flag);
  try {
    return read_cube(path);
  } catch (const IoError& e) {
    throw IoError(std::string(flag) + ": " + e.what());
  }
}

RunConfig build_config(const Options& o, bool raf_stage, bool nlrgs_stage) {
  RunConfig c;
  apply_settings(c, profile(o.profile));
  if (!o.config.empty()) apply_settings(c, parse_key_values(read_text(o.config), o.config));
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + s + "'");
    apply_setting(c, s.substr(0, eq), s.substr(eq + 1));
  }
  if (o.tol) {
    if (raf_stage) c.raf.tol_outer = *o.tol;
    if (nlrgs_stage) c.nlrgs.tol = *o.tol;
  }
  if (o.max_iter) {
    if (raf_stage) c.raf.max_outer = *o.max_iter;
    if (nlrgs_stage) c.nlrgs.max_iter = *o.max_iter;
  }
  return c;
}

// Kernel and response come from files when given, otherwise the defaults for
// the observed shapes.
DegradationModel build_model(const Options& o, const Cube& y, const Cube& z) {
  Index d = o.factor;
  if (d == 0) {
    if (z.rows() % y.rows() != 0 || z.cols() % y.cols() != 0 || z.rows() / y.rows() != z.cols() / y.cols())
      throw DimensionError("--z " + z.shape() + " is not an integer multiple of --y " + y.shape());
    d = z.rows() / y.rows();
  }
  DegradationModel m = default_model(d, z.bands(), y.bands());
  if (!o.kernel.empty()) {
    const Cube k = load(o.kernel, "--kernel");
    if (k.bands() != 1) throw DimensionError("--kernel must have one band, got " + k.shape());
    m.kernel = k.band(0);
  }
  if (!o.response.empty()) {
    const Cube r = load(o.response, "--response");
    if (r.bands() != 1) throw DimensionError("--response must have one band, got " + r.shape());
    m.response = Matrix(r.band(0));
  }
  m.validate();
  return m;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("--out-dir: cannot create '" + dir + "': " + ec.message());
}

std::string path_in(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

json metrics_json(const MetricReport& m) {
  return {{"psnr", m.psnr}, {"ssim", m.ssim}, {"ergas", m.ergas}, {"sam", m.sam}};
}

std::string raf_log_lines(const RafResult& r, bool timing) {
  std::string out;
  for (const auto& e : r.log) {
    json j = {{"stage", "raf"},          {"iteration", e.iteration}, {"kappa", e.kappa},
              {"tnn", e.tnn},            {"dtau_norm", e.dtau_norm}, {"sweeps", e.sweeps}};
    if (timing) j["wall_time"] = e.wall_time;
    out += j.dump() + "\n";
  }
  return out;
}

std::string nlrgs_log_lines(const NlrgsResult& r, bool timing) {
  std::string out = json{{"stage", "nlrgs"}, {"iteration", 0}, {"g", r.g_initial}}.dump() + "\n";
  for (const auto& e : r.log) {
    json j = {{"stage", "nlrgs"},
              {"iteration", e.iteration},
              {"g", e.g},
              {"descent_slack", e.descent_slack},
              {"step_sq", e.step_sq},
              {"kappa", e.kappa},
              {"kappa_l", e.kappa_l},
              {"kappa_e", e.kappa_e},
              {"admm_iterations", e.admm_iterations},
              {"bcd_iterations", e.bcd_iterations}};
    if (timing) j["wall_time"] = e.wall_time;
    out += j.dump() + "\n";
  }
  return out;
}

WarpKind warp_for(const Options& o, std::optional<SimKind> sim) {
  if (!o.warp.empty()) return parse_warp_kind(o.warp);
  return sim ? sim_warp_kind(*sim) : WarpKind::TRANSLATION;
}

struct Inputs {
  Cube y, z;
  std::optional<Cube> gt;
  DegradationModel model;
  std::optional<SimKind> sim;
};

// --y/--z from files, or (pipeline only) the bundled synthetic scenario.
Inputs load_inputs(const Options& o, bool allow_scenario) {
  Inputs in;
  if (o.y.empty() && o.z.empty() && allow_scenario) {
    SimSpec s = default_scenario(o.seed);
    s.kind = parse_sim_kind(o.kind);
    s.magnitude = o.magnitude;
    s.noise_snr = o.snr;
    const SimOutput sim = simulate(s);
    in.y = sim.y;
    in.z = sim.z;
    in.gt = sim.ground_truth;
    in.model = s.model;
    in.sim = s.kind;
    return in;
  }
  in.y = load(o.y, "--y");
  in.z = load(o.z, "--z");
  if (!o.gt.empty()) in.gt = load(o.gt, "--gt");
  in.model = build_model(o, in.y, in.z);
  return in;
}

int run_simulate(const Options& o) {
  SimSpec s = default_scenario(o.seed);
  if (!o.gt.empty()) {
    s.source = load(o.gt, "--gt");
    s.model = default_model(o.factor > 0 ? o.factor : 2, std::max<Index>(1, s.source.bands() / 2), s.source.bands());
  } else if (o.factor > 0) {
    s.model = default_model(o.factor, 4, 8);
  }
  s.kind = parse_sim_kind(o.kind);
  s.magnitude = o.magnitude;
  s.noise_snr = o.snr;
  const SimOutput out = simulate(s);
  ensure_dir(o.out_dir);
  write_cube(path_in(o.out_dir, "y.tcu"), out.y);
  write_cube(path_in(o.out_dir, "z.tcu"), out.z);
  write_cube(path_in(o.out_dir, "gt.tcu"), out.ground_truth);
  write_text(path_in(o.out_dir, "true_tau.txt"), to_text(out.true_tau));
  Cube k(s.model.kernel.rows(), s.model.kernel.cols(), 1);
  k.band(0) = s.model.kernel;
  write_cube(path_in(o.out_dir, "kernel.tcu"), k);
  Cube r(s.model.response.rows(), s.model.response.cols(), 1);
  r.band(0) = s.model.response;
  write_cube(path_in(o.out_dir, "response.tcu"), r);
  std::cout << json{{"y", out.y.shape()}, {"z", out.z.shape()}, {"kind", sim_kind_name(s.kind)},
                    {"magnitude", s.magnitude}, {"seed", s.seed}}
                   .dump()
            << "\n";
  return kExitOk;
}

int run_raf(const Options& o) {
  RunConfig c = build_config(o, true, false);
  const Inputs in = load_inputs(o, false);
  const RafResult r = raf_run(in.y, in.z, in.model, c.raf, warp_for(o, in.sim));
  ensure_dir(o.out_dir);
  write_cube(path_in(o.out_dir, "registered.tcu"), r.y_registered);
  write_cube(path_in(o.out_dir, "fused_raf.tcu"), r.x_fused);
  write_text(path_in(o.out_dir, "tau.txt"), to_text(r.tau));
  write_text(path_in(o.out_dir, "raf_log.jsonl"), raf_log_lines(r, o.timing));
  json summary = {{"raf", {{"iterations", r.iterations}, {"converged", r.converged}}}};
  if (in.gt) summary["raf"]["metrics"] = metrics_json(evaluate(r.x_fused, *in.gt, in.model.factor));
  write_text(path_in(o.out_dir, "metrics.json"), summary.dump(2) + "\n");
  std::cout << summary.dump() << "\n";
  if (!r.converged) std::cerr << "raf: did not reach tol_outer " << c.raf.tol_outer << "\n";
  return r.converged ? kExitOk : kExitNoConv;
}

int run_nlrgs(const Options& o) {
  RunConfig c = build_config(o, false, true);
  const Inputs in = load_inputs(o, false);
  if (const std::string note = resolve_for_bands(c, in.y.bands()); !note.empty()) std::cerr << note << "\n";
  if (c.nlrgs.use_corrected_z) std::cerr << "nlrgs.use_corrected_z ignored: no spectral correction outside pipeline\n";
  std::optional<Cube> warm;
  if (!o.warm.empty()) warm = load(o.warm, "--warm");
  const NlrgsResult r = pao_run(in.y, in.z, in.model, c.nlrgs, warm);
  ensure_dir(o.out_dir);
  write_cube(path_in(o.out_dir, "fused.tcu"), r.x_fused);
  write_text(path_in(o.out_dir, "nlrgs_log.jsonl"), nlrgs_log_lines(r, o.timing));
  json summary = {{"nlrgs", {{"iterations", r.iterations}, {"converged", r.converged}}}};
  if (in.gt) summary["nlrgs"]["metrics"] = metrics_json(evaluate(r.x_fused, *in.gt, in.model.factor));
  write_text(path_in(o.out_dir, "metrics.json"), summary.dump(2) + "\n");
  std::cout << summary.dump() << "\n";
  return r.converged ? kExitOk : kExitNoConv;
}

int run_pipeline(const Options& o) {
  RunConfig c = build_config(o, true, true);
  const Inputs in = load_inputs(o, true);
  if (const std::string note = resolve_for_bands(c, in.y.bands()); !note.empty()) std::cerr << note << "\n";
  const RafResult raf = raf_run(in.y, in.z, in.model, c.raf, warp_for(o, in.sim));
  const Cube z2 = c.nlrgs.use_corrected_z ? detail::apply_gain(in.z, raf.gain, raf.offset) : in.z;
  const NlrgsResult nl = pao_run(raf.y_registered, z2, in.model, c.nlrgs, raf.x_fused);

  ensure_dir(o.out_dir);
  write_cube(path_in(o.out_dir, "registered.tcu"), raf.y_registered);
  write_cube(path_in(o.out_dir, "fused_raf.tcu"), raf.x_fused);
  write_cube(path_in(o.out_dir, "fused.tcu"), nl.x_fused);
  write_text(path_in(o.out_dir, "tau.txt"), to_text(raf.tau));
  write_text(path_in(o.out_dir, "raf_log.jsonl"), raf_log_lines(raf, o.timing));
  write_text(path_in(o.out_dir, "nlrgs_log.jsonl"), nlrgs_log_lines(nl, o.timing));
  json summary = {{"raf", {{"iterations", raf.iterations}, {"converged", raf.converged}}},
                  {"nlrgs", {{"iterations", nl.iterations}, {"converged", nl.converged}}}};
  if (in.gt) {
    summary["raf"]["metrics"] = metrics_json(evaluate(raf.x_fused, *in.gt, in.model.factor));
    summary["nlrgs"]["metrics"] = metrics_json(evaluate(nl.x_fused, *in.gt, in.model.factor));
  }
  write_text(path_in(o.out_dir, "metrics.json"), summary.dump(2) + "\n");
  std::cout << summary.dump() << "\n";
  if (!raf.converged) std::cerr << "raf: did not reach tol_outer " << c.raf.tol_outer << "\n";
  if (!nl.converged) std::cerr << "nlrgs: did not reach tol " << c.nlrgs.tol << "\n";
  return raf.converged && nl.converged ? kExitOk : kExitNoConv;
}

int run_metrics(const Options& o) {
  const Cube x = load(o.x, "--x"), ref = load(o.ref, "--ref");
  const double d = o.d > 0.0 ? o.d : 1.0;
  const std::string text = metrics_json(evaluate(x, ref, d)).dump(2) + "\n";
  if (!o.out.empty()) write_text(o.out, text);
  std::cout << text;
  return kExitOk;
}

int run_estimate(const Options& o) {
  const Cube y = load(o.y, "--y"), z = load(o.z, "--z");
  const DegradationEstimate e = estimate_degradation(y, z, o.lambda_r, o.lambda_b, o.kernel_size);
  ensure_dir(o.out_dir);
  Cube k(e.model.kernel.rows(), e.model.kernel.cols(), 1);
  k.band(0) = e.model.kernel;
  write_cube(path_in(o.out_dir, "kernel.tcu"), k);
  Cube r(e.model.response.rows(), e.model.response.cols(), 1);
  r.band(0) = e.model.response;
  write_cube(path_in(o.out_dir, "response.tcu"), r);
  const json summary = {{"factor", e.model.factor}, {"iterations", e.iterations}, {"objective", e.objective},
                        {"converged", e.converged}};
  std::cout << summary.dump() << "\n";
  return e.converged ? kExitOk : kExitNoConv;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rafnl: hyperspectral/multispectral registration and fusion"};
  app.require_subcommand(1);
  Options o;

  auto io_flags = [&](CLI::App* s) {
    s->add_option("--y", o.y, "low-resolution HSI (TCU1)");
    s->add_option("--z", o.z, "high-resolution MSI (TCU1)");
    s->add_option("--gt", o.gt, "ground truth for metrics (TCU1)");
    s->add_option("--out-dir", o.out_dir, "output directory");
    s->add_option("--kernel", o.kernel, "blur kernel, k x k x 1 TCU1");
    s->add_option("--response", o.response, "spectral response, h x H x 1 TCU1");
    s->add_option("--factor", o.factor, "downsampling factor (default: from shapes)");
  };
  auto cfg_flags = [&](CLI::App* s) {
    s->add_option("--config", o.config, "key = value file");
    s->add_option("--profile", o.profile, "default | paper-defaults");
    s->add_option("--set", o.sets, "key=value override, repeatable");
    s->add_option("--tol", o.tol, "outer tolerance of the stage(s) run");
    s->add_option("--max-iter", o.max_iter, "outer iteration cap of the stage(s) run");
    s->add_flag("--timing", o.timing, "add wall_time to the logs");
  };
  auto sim_flags = [&](CLI::App* s) {
    s->add_option("--seed", o.seed, "scenario seed");
    s->add_option("--kind", o.kind, "none | translation | rotation | flip | barrel | pincushion");
    s->add_option("--magnitude", o.magnitude, "perturbation size");
    s->add_option("--snr", o.snr, "noise SNR in dB per branch (default noiseless)");
  };

  auto* sim = app.add_subcommand("simulate", "write a synthetic (y, z, gt) triple");
  sim->add_option("--gt", o.gt, "source cube instead of the built-in scene");
  sim->add_option("--out-dir", o.out_dir, "output directory");
  sim->add_option("--factor", o.factor, "downsampling factor");
  sim_flags(sim);

  auto* raf = app.add_subcommand("raf", "registration and fusion");
  io_flags(raf);
  cfg_flags(raf);
  raf->add_option("--warp", o.warp, "translation | similarity | affine | radial");

  auto* nl = app.add_subcommand("nlrgs", "low-rank + group-sparse refinement of registered data");
  io_flags(nl);
  cfg_flags(nl);
  nl->add_option("--warm", o.warm, "fused cube used as the starting point");

  auto* pipe = app.add_subcommand("pipeline", "raf then nlrgs; without --y/--z runs the synthetic scenario");
  io_flags(pipe);
  cfg_flags(pipe);
  sim_flags(pipe);
  pipe->add_option("--warp", o.warp, "translation | similarity | affine | radial");

  auto* met = app.add_subcommand("metrics", "PSNR, SSIM, ERGAS, SAM as JSON");
  met->add_option("--x", o.x, "estimate (TCU1)")->required();
  met->add_option("--ref", o.ref, "reference (TCU1)")->required();
  met->add_option("--d", o.d, "resolution ratio for ERGAS (default 1)");
  met->add_option("--out", o.out, "also write the report here");

  auto* est = app.add_subcommand("estimate-degradation", "fit kernel and spectral response");
  est->add_option("--y", o.y, "low-resolution HSI (TCU1)")->required();
  est->add_option("--z", o.z, "high-resolution MSI (TCU1)")->required();
  est->add_option("--out-dir", o.out_dir, "output directory");
  est->add_option("--kernel-size", o.kernel_size, "odd kernel width");
  est->add_option("--lambda-r", o.lambda_r, "response smoothness weight");
  est->add_option("--lambda-b", o.lambda_b, "kernel smoothness weight");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*sim) return run_simulate(o);
    if (*raf) return run_raf(o);
    if (*nl) return run_nlrgs(o);
    if (*pipe) return run_pipeline(o);
    if (*met) return run_metrics(o);
    if (*est) return run_estimate(o);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
