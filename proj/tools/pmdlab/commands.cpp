#include "commands.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <optional>

#include <CLI11.hpp>

#include "pmdlab/contraction.hpp"
#include "pmdlab/io.hpp"
#include "pmdlab/lambertw.hpp"
#include "pmdlab/solvers.hpp"

namespace pmdlab::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json constants_json() {
  return json{{"simplex_tol", kSimplexTol},
              {"renormalize_tol", kRenormalizeTol},
              {"lambert_max_iter", detail::kLambertMaxIter},
              {"mismatch_constant", kMismatchConstant},
              {"one_step_constant", kOneStepConstant},
              {"clip_headroom_default", kClipHeadroom},
              {"grpo_std_guard", kGrpoStdGuard},
              {"positive_sample", "r(y) > E_{pi_t} r"}};
}

const char* kRngDescription =
    "std::mt19937_64 seeded with std::seed_seq over the 32-bit halves of (seed, stream, tag); "
    "sub-stream seeds via splitmix64; uniform doubles from the top 53 bits";

/// Writes `<stem>.manifest.json` next to the given files (all sharing `stem`).
fs::path write_manifest(const CommonOptions& common, const std::string& command,
                        const std::string& stem, const json& config,
                        const std::vector<fs::path>& files, json extra = json::object()) {
  json hashes = json::object();
  for (const auto& f : files) hashes[f.filename().string()] = git_blob_sha1(read_text(f));
  json doc{{"command", command},
           {"version", kVersion},
           {"seed", common.seed},
           {"config", config},
           {"constants", constants_json()},
           {"rng", kRngDescription},
           {"files", hashes}};
  for (auto& [k, v] : extra.items()) doc[k] = v;
  const auto path = common.out / (stem + ".manifest.json");
  write_json(path, doc);
  return path;
}

std::vector<fs::path> emit(const CommonOptions& common, const std::string& command,
                           const std::string& stem, const json& config,
                           const std::vector<std::pair<std::string, std::string>>& named_text,
                           json extra = json::object()) {
  std::vector<fs::path> files;
  for (const auto& [name, text] : named_text) {
    files.push_back(common.out / name);
    write_text(files.back(), text);
  }
  auto out = files;
  out.push_back(write_manifest(common, command, stem, config, files, std::move(extra)));
  return out;
}

double tau_log_partition(double p, double tau) {
  if (p == 0.0) return 0.0;
  // tau log(1 + (e^{1/tau} - 1) p) = tau log((1 - p) + p e^{1/tau})
  const double log_one_minus = p == 1.0 ? kNegInf : std::log1p(-p);
  if (1.0 / tau < 1e-3) return tau * std::log1p(std::expm1(1.0 / tau) * p);
  return tau * log_add_exp(log_one_minus, 1.0 / tau + std::log(p));
}

}  // namespace

std::string git_blob_sha1(const std::string& content) {
  const std::string head = "blob " + std::to_string(content.size()) + '\0';
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error("EVP_MD_CTX_new failed");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, head.data(), head.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, md, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("SHA-1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string canonical_text(const BanditInstance& instance) {
  std::string out;
  for (std::size_t s = 0; s < instance.num_states(); ++s) {
    const auto& st = instance.state(s);
    out += st.id + "," + format_double(instance.weights()[s]) + ",";
    for (std::size_t a = 0; a < st.rewards.size(); ++a) {
      if (a) out += ' ';
      out += format_double(st.rewards[a]);
    }
    out += '\n';
  }
  return out;
}

std::vector<fs::path> cmd_exact(const ExactParams& p, const CommonOptions& common) {
  CsvTable t({"p", "tau", "method", "rho_plus", "rho_minus", "lambda", "lambda_lo", "lambda_hi",
              "eta", "B", "B_plus", "kkt_residual"});
  for (double pv : p.p_grid) {
    auto [pi, r] = binary_instance(pv);
    for (double tau : p.tau_grid) {
      const PmdConfig cfg{tau, p.lambda_tol};
      for (Method m : p.methods) {
        const auto res = pmd_update(m, pi, r, cfg);
        const auto lb = log_ratio_bounds(pv, tau, m);
        double lambda = kNaN, lo = kNaN, hi = kNaN, eta = 0.0;
        if (m == Method::mean) {
          const auto br = lambda_bounds(pi, r, tau);
          lambda = res.lambda;
          lo = br.lo;
          hi = br.hi;
          eta = -std::expm1(res.log_ratio[1]);
        } else {
          eta = eta_part_exact(pv, tau);
        }
        t.add_row({pv, tau, std::string(to_string(m)), std::exp(res.log_ratio[0]),
                   std::exp(res.log_ratio[1]), lambda, lo, hi, eta, lb.B, lb.B_plus,
                   res.kkt_residual});
      }
    }
  }
  return emit(common, "exact", "exact", to_json(p), {{"exact.csv", t.str()}},
              json{{"instance", "pi_t = [p, 1 - p], r = [1, 0]"},
                   {"eta", "mean: 1 - rho_minus of the exact update; part: closed form"}});
}

std::vector<fs::path> cmd_figures(const FiguresParams& p, const CommonOptions& common) {
  std::vector<fs::path> out;
  CsvTable f1({"p", "tau", "tau_logZ", "mean_reward"});
  for (double pv : p.fig1_p_grid) {
    for (double tau : p.fig1_tau_grid) f1.add_row({pv, tau, tau_log_partition(pv, tau), pv});
  }
  const json c1{{"fig1_p_grid", p.fig1_p_grid}, {"fig1_tau_grid", p.fig1_tau_grid}};
  auto a = emit(common, "figures", "fig1_partition_vs_mean", c1,
                {{"fig1_partition_vs_mean.csv", f1.str()}});
  out.insert(out.end(), a.begin(), a.end());

  CsvTable f2({"p", "tau", "log_rho_plus_mean", "log_rho_minus_mean", "log_rho_plus_part",
               "log_rho_minus_part"});
  for (double pv : p.fig2_p_grid) {
    auto [pi, r] = binary_instance(pv);
    const PmdConfig cfg{p.fig2_tau};
    const auto mean = pmd_mean_update(pi, r, cfg);
    const auto part = pmd_part_update(pi, r, cfg);
    f2.add_row({pv, p.fig2_tau, mean.log_ratio[0], mean.log_ratio[1], part.log_ratio[0],
                part.log_ratio[1]});
  }
  const json c2{{"fig2_p_grid", p.fig2_p_grid}, {"fig2_tau", p.fig2_tau}};
  a = emit(common, "figures", "fig2_log_ratios", c2, {{"fig2_log_ratios.csv", f2.str()}});
  out.insert(out.end(), a.begin(), a.end());

  const auto rep = estimation_error_sweep(p.sweep);
  a = emit(common, "figures", "fig5_estimation", to_json(p.sweep),
           {{"fig5_estimation.csv", estimation_table(rep).str()}});
  out.insert(out.end(), a.begin(), a.end());
  a = emit(common, "figures", "fig6_signs", to_json(p.sweep),
           {{"fig6_signs.csv", signs_table(rep).str()}});
  out.insert(out.end(), a.begin(), a.end());
  return out;
}

std::vector<fs::path> cmd_estimate(const SweepConfig& c, const CommonOptions& common) {
  const auto rep = estimation_error_sweep(c);
  return emit(common, "estimate", "estimation", to_json(c),
              {{"estimation.csv", estimation_table(rep).str()},
               {"estimation.json", to_json(rep).dump(2) + "\n"}});
}

std::vector<fs::path> cmd_train(const TrainParams& p, const CommonOptions& common) {
  const auto inst = standard_instance(p.instance_seed, p.states, p.actions, p.k_min, p.k_max);
  const auto tr = train_loop(inst, p.train);
  const std::string stem = "train_" + std::string(to_string(p.train.method));
  return emit(common, "train", stem, to_json(p), {{stem + ".csv", trajectory_table(tr).str()}},
              json{{"instance_sha1", git_blob_sha1(canonical_text(inst))},
                   {"initial_policy", "uniform"}});
}

int run(int argc, char** argv) {
  CLI::App app{"pmdlab: policy mirror descent with partition vs. mean-reward targets"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<fs::path> config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> jobs;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "config file (key = value lines or a JSON object)");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--out", out_dir, "output directory (default: $PMDLAB_OUT or ./out)");
  app.add_option("--jobs", jobs, "worker threads, 0 = all cores; never changes outputs");
  app.add_option("--set", overrides, "override one config key: --set key=value")->take_all();

  auto* exact = app.add_subcommand("exact", "exact one-step ratios, lambda and rates on a (p, tau) grid");
  auto* figures = app.add_subcommand("figures", "figure data: partition gap, log-ratios, estimation");
  auto* estimate = app.add_subcommand("estimate", "target-estimation error sweep over (p, n)");
  auto* train = app.add_subcommand("train", "finite-sample training run on the tabular instance");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    KeyValues kv = config_path ? KeyValues::from_file(*config_path) : KeyValues{};
    for (const auto& s : overrides) kv.set_override(s);

    CommonOptions common;
    common.seed = seed ? *seed : kv.get_u64("seed", 0);
    const long jobs_kv = kv.get_long("jobs", 1);
    if (jobs_kv < 0) throw ConfigError("key 'jobs': must be >= 0");
    common.jobs = jobs ? *jobs : static_cast<unsigned>(jobs_kv);
    if (out_dir) {
      common.out = *out_dir;
    } else if (kv.has("out")) {
      common.out = kv.get_string("out", "out");
    } else if (const char* env = std::getenv("PMDLAB_OUT"); env && *env) {
      common.out = env;
    }

    std::vector<fs::path> files;
    if (exact->parsed()) files = cmd_exact(parse_exact(kv), common);
    else if (figures->parsed()) files = cmd_figures(parse_figures(kv, common), common);
    else if (estimate->parsed()) files = cmd_estimate(parse_estimate(kv, common), common);
    else if (train->parsed()) files = cmd_train(parse_train(kv, common), common);
    for (const auto& f : files) std::cout << f.string() << '\n';
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "pmdlab: config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    std::cerr << "pmdlab: io error: " << e.what() << '\n';
    return kConfigError;
  } catch (const InvalidArgument& e) {
    std::cerr << "pmdlab: invalid argument: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericError& e) {
    std::cerr << "pmdlab: numeric failure: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    std::cerr << "pmdlab: error: " << e.what() << '\n';
    return kNumericError;
  }
}

}  // namespace pmdlab::cli
