// hrg: command-line front end. Every command resolves its configuration from
// defaults < JSON file (--config) < flags, echoes it into the output metadata
// and writes a CSV (or JSON with --format json).

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "hrg/covariance.hpp"
#include "hrg/dense.hpp"
#include "hrg/flow.hpp"
#include "hrg/io.hpp"
#include "hrg/mcmc.hpp"
#include "hrg/profiles.hpp"
#include "hrg/rg_exact.hpp"
#include "hrg/scales.hpp"

namespace {

using json = nlohmann::json;
using namespace hrg;

constexpr int kExitConfig = 2;
constexpr int kExitDomain = 3;
constexpr int kExitInvariant = 4;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// columns plus rows of scalars; `extra` goes to '#' metadata (CSV) or top-level keys (JSON)
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<json>> rows;
  json extra = json::object();
  int status = 0;  // process exit status after the table is written
};

std::string cell(const json& v) {
  if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
  if (v.is_number_float()) return fmt17(v.get<double>());
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_null()) return "nan";
  return v.dump();
}

json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

// JSON keys use underscores, flags hyphens
std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return "--" + key;
}

std::vector<double> parse_doubles(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t used = 0;
    double v;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw ConfigError("cannot parse number '" + tok + "'");
    }
    if (tok.find_first_not_of(" \t", used) != std::string::npos) throw ConfigError("cannot parse number '" + tok + "'");
    out.push_back(v);
  }
  return out;
}

class Command {
 public:
  Command(CLI::App& root, const std::string& name, const std::string& desc) : app_(root.add_subcommand(name, desc)), name_(name) {
    app_->add_option("--config", config_path_, "JSON configuration file (flags take precedence)");
    app_->add_option("--out", out_path_, "output file (default: stdout)");
    app_->add_option("--format", format_, "output format")->check(CLI::IsMember({"csv", "json"}));
    const char* env = std::getenv("HRG_THREADS");
    int threads = 1;
    if (env && *env) {
      try {
        threads = std::stoi(env);
      } catch (const std::exception&) {
        threads = 1;
      }
    }
    opt<int>("threads", std::max(threads, 1), "worker threads (default: HRG_THREADS or 1)");
  }

  template <class T>
  Command& opt(const std::string& key, const json& def, const std::string& desc) {
    defaults_[key] = def;
    app_->add_option_function<T>(flag_name(key), [this, key](const T& v) { flags_[key] = v; }, desc);
    return *this;
  }
  Command& list(const std::string& key, const json& def, const std::string& desc, bool integer) {
    defaults_[key] = def;
    app_->add_option_function<std::string>(
        flag_name(key),
        [this, key, integer](const std::string& s) {
          json arr = json::array();
          for (double v : parse_doubles(s)) {
            if (integer) {
              if (v != std::floor(v)) throw ConfigError(flag_name(key) + " expects integers");
              arr.push_back(static_cast<int>(v));
            } else {
              arr.push_back(v);
            }
          }
          flags_[key] = arr;
        },
        desc + " (comma-separated)");
    return *this;
  }

  void action(std::function<Table(const json&)> f) { run_ = std::move(f); }
  CLI::App* app() { return app_; }
  const std::string& name() const { return name_; }
  bool always_json = false;

  json resolve() const {
    json cfg = defaults_;
    if (!config_path_.empty()) {
      std::ifstream in(config_path_);
      if (!in) throw ConfigError("cannot open config file " + config_path_);
      json file;
      try {
        file = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ConfigError(std::string("invalid JSON config: ") + e.what());
      }
      if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
      for (auto it = file.begin(); it != file.end(); ++it) {
        if (!cfg.contains(it.key())) throw ConfigError("unknown config key '" + it.key() + "' for command " + name_);
        cfg[it.key()] = it.value();
      }
    }
    for (auto it = flags_.begin(); it != flags_.end(); ++it) cfg[it.key()] = it.value();
    return cfg;
  }

  int execute() const {
    const json cfg = resolve();
    const Table t = run_(cfg);
    std::ofstream file;
    if (!out_path_.empty()) {
      file.open(out_path_, std::ios::binary);
      if (!file) throw ConfigError("cannot open output file " + out_path_);
    }
    std::ostream& os = out_path_.empty() ? std::cout : file;
    const std::string dumped = cfg.dump();
    const std::string hash = hex64(fnv1a64(dumped));
    if (format_ == "json" || always_json) {
      json doc = json::object();
      doc["version"] = kVersion;
      doc["command"] = name_;
      doc["config_hash"] = hash;
      doc["seed"] = cfg.contains("seed") ? cfg["seed"] : json(nullptr);
      doc["config"] = cfg;
      for (auto it = t.extra.begin(); it != t.extra.end(); ++it) doc[it.key()] = it.value();
      if (!t.columns.empty()) {
        doc["columns"] = t.columns;
        json rows = json::array();
        for (const auto& r : t.rows) rows.push_back(r);
        doc["rows"] = rows;
      }
      os << doc.dump(2) << '\n';
    } else {
      CsvWriter w(os);
      w.meta("version", kVersion);
      w.meta("command", name_);
      w.meta("config_hash", hash);
      w.meta("seed", cfg.contains("seed") ? cfg["seed"].dump() : "none");
      w.meta("config", dumped);
      for (auto it = t.extra.begin(); it != t.extra.end(); ++it) w.meta(it.key(), it.value().is_number_float() ? fmt17(it.value()) : it.value().dump());
      w.header(t.columns);
      for (const auto& r : t.rows) {
        std::vector<std::string> cells;
        for (const auto& v : r) cells.push_back(cell(v));
        w.row(cells);
      }
    }
    os.flush();
    return t.status;
  }

 private:
  CLI::App* app_;
  std::string name_;
  std::string config_path_, out_path_, format_ = "csv";
  json defaults_ = json::object(), flags_ = json::object();
  std::function<Table(const json&)> run_;
};

// ---------------------------------------------------------------------------
// config accessors

template <class T>
T get(const json& cfg, const std::string& key) {
  const auto& v = cfg.at(key);
  if (v.is_null()) throw ConfigError("missing required parameter " + flag_name(key));
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("parameter " + flag_name(key) + " has the wrong type");
  }
}

template <class T>
std::optional<T> get_opt(const json& cfg, const std::string& key) {
  if (cfg.at(key).is_null()) return std::nullopt;
  return get<T>(cfg, key);
}

LatticeShape shape_of(const json& cfg, Boundary bc = Boundary::Periodic) {
  try {
    return LatticeShape(get<int>(cfg, "d"), get<int>(cfg, "L"), get<int>(cfg, "N"), bc);
  } catch (const std::domain_error& e) {
    throw ConfigError(e.what());
  }
}

Boundary bc_of(const json& cfg) {
  try {
    return parse_boundary(get<std::string>(cfg, "bc"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

std::vector<int> classes_of_cfg(const json& cfg, const LatticeShape& shape) {
  std::vector<int> cls;
  if (cfg.at("classes").is_null()) {
    for (int j = 0; j <= shape.scales(); ++j) cls.push_back(j);
    return cls;
  }
  cls = get<std::vector<int>>(cfg, "classes");
  for (int j : cls)
    if (j < 0 || j > shape.scales()) throw ConfigError("coalescence class " + std::to_string(j) + " outside 0..N");
  return cls;
}

NumericsConfig numerics_of(const json& cfg) {
  NumericsConfig nc;
  nc.grid_points = get<int>(cfg, "grid");
  nc.samples = get<int>(cfg, "samples");
  nc.seed = get<std::uint64_t>(cfg, "seed");
  nc.threads = get<int>(cfg, "threads");
  const auto sampler = get<std::string>(cfg, "sampler");
  if (sampler == "mc")
    nc.sampler = SamplerKind::MonteCarlo;
  else if (sampler == "quad")
    nc.sampler = SamplerKind::TensorQuad;
  else
    throw ConfigError("sampler must be 'mc' or 'quad'");
  nc.quad_nodes = get<int>(cfg, "quad_nodes");
  const auto renorm = get<std::string>(cfg, "renorm");
  if (renorm == "origin")
    nc.renorm = RenormPolicy::AtOrigin;
  else if (renorm == "maximum")
    nc.renorm = RenormPolicy::AtMaximum;
  else
    throw ConfigError("renorm must be 'origin' or 'maximum'");
  try {
    nc.validate(get<int>(cfg, "n"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return nc;
}

void lattice_opts(Command& c) {
  c.opt<int>("d", 4, "dimension").opt<int>("L", 2, "block side").opt<int>("N", 3, "number of scales");
}

void model_opts(Command& c) {
  c.opt<int>("n", 1, "number of field components").opt<double>("g", 0.05, "quartic coupling");
  c.opt<std::string>("bc", "periodic", "boundary condition {free,periodic}");
}

void numerics_opts(Command& c) {
  c.opt<int>("samples", 20000, "Monte Carlo draws per RG step").opt<int>("grid", 129, "field grid points");
  c.opt<std::string>("sampler", "mc", "fluctuation integral {mc,quad}").opt<int>("quad_nodes", 6, "Gauss-Hermite nodes per dimension");
  c.opt<std::string>("renorm", "origin", "normalisation point {origin,maximum}");
  c.opt<std::uint64_t>("seed", 1, "random seed");
}

// ---------------------------------------------------------------------------
// verify

Table cmd_verify(const json& cfg) {
  const double q_factor = get<double>(cfg, "inject_q");
  Table t;
  t.columns = {"check", "case", "error", "tolerance", "pass"};
  int failures = 0;
  auto record = [&](const std::string& check, const std::string& which, double err, double tol) {
    const bool ok = std::isfinite(err) && err < tol;
    if (!ok) {
      ++failures;
      std::cerr << "FAIL " << check << " [" << which << "]: error " << fmt17(err) << " >= " << fmt17(tol) << '\n';
    }
    t.rows.push_back({check, which, jnum(err), tol, ok});
  };
  auto label = [](std::initializer_list<std::pair<const char*, std::string>> kv) {
    std::string s;
    for (const auto& [k, v] : kv) s += (s.empty() ? "" : " ") + std::string(k) + "=" + v;
    return s;
  };

  // dense resolvent identity with the Laplacian rebuilt from J and q
  for (auto [d, L, N] : {std::tuple{4, 2, 2}, std::tuple{5, 2, 2}})
    for (Boundary bc : {Boundary::Free, Boundary::Periodic}) {
      const LatticeShape sh(d, L, N, bc);
      for (double a : {0.1, sh.Lpow(-2.0 * N)}) {
        const auto ops = build_dense(bc, a, sh);
        const auto V = static_cast<Eigen::Index>(sh.volume());
        const double q = q_factor * const_q(d, L);
        const Eigen::MatrixXd lap = q * (Eigen::MatrixXd::Identity(V, V) - ops.J);
        const Eigen::MatrixXd prod = (lap + a * Eigen::MatrixXd::Identity(V, V)) * (*ops.resolvent);
        const double err = (prod - Eigen::MatrixXd::Identity(V, V)).cwiseAbs().maxCoeff();
        record("resolvent", label({{"d", std::to_string(d)}, {"L", std::to_string(L)}, {"N", std::to_string(N)}, {"bc", to_string(bc)}, {"a", fmt17(a)}}), err, 1e-10);
      }
    }

  // per-level sum rules and susceptibilities
  for (int d : {4, 5}) {
    const int L = 2, N = 5;
    const LatticeShape sh(d, L, N);
    for (double a : {0.1, sh.Lpow(-2.0 * N), 5 * sh.Lpow(-2.0 * N), -0.25 * sh.Lpow(-2.0 * (N - 1))}) {
      const KernelEval k(sh, a);
      const std::string lab = label({{"d", std::to_string(d)}, {"N", std::to_string(N)}, {"a", fmt17(a)}});
      double worst = 0;
      for (int j = 1; j <= N; ++j) {
        double s = 0;
        for (int jxy = 0; jxy <= N; ++jxy) s += static_cast<double>(k.class_size(jxy)) * k.c_level(j, jxy);
        worst = std::max(worst, std::abs(s));
      }
      record("level_sum_zero", lab, worst, 1e-12);
      for (Boundary bc : {Boundary::Periodic, Boundary::Free}) {
        double chi = 0;
        for (int jxy = 0; jxy <= N; ++jxy) chi += static_cast<double>(k.class_size(jxy)) * k.green(bc, jxy);
        const double m = bc == Boundary::Periodic ? a : a + q_factor * const_q(d, L) * sh.Lpow(-2.0 * N);
        record("susceptibility_" + to_string(bc), lab, std::abs(chi * m - 1), 1e-12);
      }
    }
  }

  // profiles
  const double f1 = 2 * std::tgamma(0.75) / std::tgamma(0.25);
  record("profile_f1_0", "n=1 s=0", std::abs(profile_f(1, 0.0) - f1), 1e-8);
  for (int n : {1, 2, 3}) {
    for (double s : {0.5, 3.0, 50.0})
      record("gaussian_moment", label({{"n", std::to_string(n)}, {"s", fmt17(s)}}), std::abs(gaussian_moment(n, 1, s) * s / n - 1), 1e-10);
    record("profile_large_s", label({{"n", std::to_string(n)}, {"s", "1000"}}), std::abs(1000 * profile_f(n, 1000.0) - 1), 0.02);
  }

  // scales: h_N^2 / l_N^2 algebra and the flow stability bound
  for (int d : {4, 5, 6}) {
    const auto p = ScaleParams::leading_order(d, 2, 6, 1, 0.05);
    const double h = large_field_h(p), l = gaussian_l(p);
    const double expect = d == 4 ? std::sqrt(p.B() * p.N) : std::pow(p.g_inf, -0.5) * p.Lp((d - 4.0) * p.N / 2.0);
    record("h_over_l", label({{"d", std::to_string(d)}}), std::abs(h * h / (l * l) / expect - 1), 1e-12);
    const auto fl = gtilde_flow(0.05, 0.0, d, 2, const_B(1, d, 2), 1000);
    double worst = 0;
    for (std::size_t i = 0; i + 1 < fl.size(); ++i) {
      const double lo = fl[i + 1].gtilde, gj = fl[i].gtilde;
      if (!(lo <= gj && gj <= 2 * lo)) worst = 1;
    }
    record("flow_bound", label({{"d", std::to_string(d)}, {"g0", "0.05"}}), worst, 0.5);
  }

  t.extra["failures"] = failures;
  if (failures > 0) t.status = kExitInvariant;
  return t;
}

// ---------------------------------------------------------------------------
// green

Table cmd_green(const json& cfg) {
  const Boundary bc = bc_of(cfg);
  const LatticeShape sh = shape_of(cfg, bc);
  const double a = cfg.at("mass").is_null() ? sh.Lpow(-2.0 * sh.scales()) : get<double>(cfg, "mass");
  const auto cls = classes_of_cfg(cfg, sh);
  Table t;
  t.columns = {"jxy", "euclid_norm", "value", "tail_bound", "massless_infinite", "bc_difference", "lattice_sum"};
  if (cls.empty()) return t;
  const KernelEval k(sh, a);
  double sum = 0;
  for (int j = 0; j <= sh.scales(); ++j) sum += static_cast<double>(k.class_size(j)) * k.green(bc, j);
  for (int j : cls) {
    const Site x = class_representative(j, sh);
    TruncatedSum inf;
    bool have_inf = sh.dim() > 2;
    if (have_inf) inf = green_infty(sh.dim(), sh.block_side(), j, 1e-15);
    double diff;
    try {
      diff = k.green(Boundary::Free, j) - k.green(Boundary::Periodic, j);
    } catch (const std::domain_error&) {
      diff = std::numeric_limits<double>::quiet_NaN();
    }
    t.rows.push_back({j, euclid_norm(x), k.green(bc, j), have_inf ? jnum(inf.tail_bound) : json(nullptr), have_inf ? jnum(inf.value) : json(nullptr),
                      jnum(diff), sum});
  }
  t.extra["mass"] = a;
  t.extra["inverse_zero_mode_mass"] = 1.0 / zero_mode_mass(bc, a, sh);
  return t;
}

// ---------------------------------------------------------------------------
// profile, scales, flow

Table cmd_profile(const json& cfg) {
  const auto ns = get<std::vector<int>>(cfg, "n_list");
  const auto ss = get<std::vector<double>>(cfg, "s");
  Table t;
  t.columns = {"n", "s", "f", "sigma_2", "sigma_4", "gaussian_f"};
  for (int n : ns) {
    if (n < 1) throw ConfigError("n must be >= 1");
    for (double s : ss)
      t.rows.push_back({n, s, profile_f(n, s), sigma_moment(n, 2, s), sigma_moment(n, 4, s), s > 0 ? json(1.0 / s) : json(nullptr)});
  }
  return t;
}

ScaleParams scale_params_of(const json& cfg) {
  try {
    return ScaleParams::leading_order(get<int>(cfg, "d"), get<int>(cfg, "L"), get<int>(cfg, "N"), get<int>(cfg, "n"), get<double>(cfg, "g"));
  } catch (const std::domain_error& e) {
    throw ConfigError(e.what());
  }
}

Table cmd_scales(const json& cfg) {
  const auto p = scale_params_of(cfg);
  const Boundary bc = bc_of(cfg);
  Table t;
  json& o = t.extra;
  o["B"] = p.B();
  o["gamma_hat"] = gamma_hat(p.n);
  o["A_d"] = p.A_d;
  o["g_inf"] = p.g_inf;
  o["nu_c"] = p.nu_c;
  const auto ne = nu_eff(bc, p);
  o["nu_eff"] = ne.value;
  o["nu_eff_approximate"] = ne.approximate;
  o["w_N"] = window_w(p);
  o["v_N"] = shift_v(p);
  o["h_N"] = large_field_h(p);
  o["l_N"] = gaussian_l(p);
  o["q"] = p.q();
  o["caveats"] = p.caveats;
  json rows = json::array();
  for (double s : get<std::vector<double>>(cfg, "s")) {
    json r;
    r["s"] = s;
    r["f_n"] = profile_f(p.n, s);
    r["mass_window_nongaussian"] = mass_window(s, bc, Regime::NonGaussian, p);
    r["mass_window_gaussian"] = s > 0 ? json(mass_window(s, bc, Regime::Gaussian, p)) : json(nullptr);
    r["crossover_class"] = crossover_class(s, p);
    r["crossover_radius"] = crossover_radius(s, p);
    rows.push_back(r);
  }
  o["per_s"] = rows;
  return t;
}

Table cmd_flow(const json& cfg) {
  const int d = get<int>(cfg, "d"), L = get<int>(cfg, "L"), n = get<int>(cfg, "n");
  const double B = const_B(n, d, L);
  const auto fl = gtilde_flow(get<double>(cfg, "g"), get<double>(cfg, "atilde"), d, L, B, get<int>(cfg, "jmax"));
  Table t;
  t.columns = {"j", "gtilde", "beta", "vartheta", "rho", "gtilde_B_j"};
  for (const auto& s : fl) t.rows.push_back({s.j, s.gtilde, s.beta, s.vartheta, s.rho, s.gtilde * B * s.j});
  t.extra["B"] = B;
  return t;
}

// ---------------------------------------------------------------------------
// rg-exact, mcmc, plateau

ModelParams model_of(const json& cfg, bool need_nu) {
  ModelParams m;
  m.n = get<int>(cfg, "n");
  m.g = get<double>(cfg, "g");
  if (m.n < 1) throw ConfigError("n must be >= 1");
  if (m.g < 0) throw ConfigError("g must be >= 0");
  if (need_nu) m.nu = get<double>(cfg, "nu");
  return m;
}

void dump_effective(const std::string& path, const std::vector<EffectiveZ>& zs) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open " + path);
  CsvWriter w(f);
  std::vector<std::string> cols = {"scale", "phi", "z_empty", "z_o", "z_x"};
  if (!zs.empty())
    for (int c : zs.front().classes) cols.push_back("z_ox_" + std::to_string(c));
  cols.push_back("log_norm");
  w.header(cols);
  for (const auto& z : zs)
    for (int i = 0; i < z.grid.size(); ++i) {
      const auto c = z.components(i);
      std::vector<std::string> r = {std::to_string(z.scale), fmt17(c.phi), fmt17(c.z_empty), fmt17(c.z_o), fmt17(c.z_x)};
      for (double v : c.z_ox) r.push_back(fmt17(v));
      r.push_back(fmt17(z.log_norm));
      w.row(r);
    }
}

Table cmd_rg_exact(const json& cfg) {
  const Boundary bc = bc_of(cfg);
  const LatticeShape sh = shape_of(cfg, bc);
  ModelParams m = model_of(cfg, true);
  m.mass = cfg.at("mass").is_null() ? default_mass_split(bc, sh, m.g, m.n) : get<double>(cfg, "mass");
  const auto cls = classes_of_cfg(cfg, sh);
  const auto nc = numerics_of(cfg);
  const int replicas = get<int>(cfg, "replicas");
  if (replicas < 1) throw ConfigError("replicas must be >= 1");
  const std::string dump = get<std::string>(cfg, "dump_effective");
  Table t;
  t.columns = {"jxy", "euclid_norm", "G", "G_err", "green_gaussian"};
  if (cls.empty()) return t;
  std::vector<std::vector<double>> G(cls.size());
  std::vector<double> chi, tails;
  double lemma = 0;
  std::vector<EffectiveZ> zs;
  for (int r = 0; r < replicas; ++r) {
    std::function<void(const EffectiveZ&)> obs;
    if (r == 0 && !dump.empty()) obs = [&](const EffectiveZ& z) { zs.push_back(z); };
    const auto run = run_rg(m, bc, sh, cls, nc, r, obs);
    for (std::size_t k = 0; k < cls.size(); ++k) G[k].push_back(run.zero_mode.two_point[k]);
    chi.push_back(run.zero_mode.chi);
    tails.push_back(run.zero_mode.tail_fraction);
    for (double v : run.lemma_ratio) lemma = std::max(lemma, v);
  }
  if (!dump.empty()) dump_effective(dump, zs);
  // Gaussian reference: the free-field Green function at the total mass ν (g = 0 only)
  const bool gaussian = m.g == 0;
  for (std::size_t k = 0; k < cls.size(); ++k) {
    const auto e = mean_sem(G[k]);
    const Site x = class_representative(cls[k], sh);
    json ref = nullptr;
    if (gaussian) ref = green(bc, m.nu, sh, x);
    t.rows.push_back({cls[k], euclid_norm(x), e.mean, jnum(e.err), ref});
  }
  const auto c = mean_sem(chi);
  t.extra["chi"] = c.mean;
  t.extra["chi_err"] = jnum(c.err);
  t.extra["mass_split"] = m.mass;
  t.extra["max_lemma_ratio"] = lemma;
  t.extra["max_tail_fraction"] = *std::max_element(tails.begin(), tails.end());
  return t;
}

Table cmd_mcmc(const json& cfg) {
  const Boundary bc = bc_of(cfg);
  const LatticeShape sh = shape_of(cfg, bc);
  const ModelParams m = model_of(cfg, true);
  const auto cls = classes_of_cfg(cfg, sh);
  ChainConfig cc;
  cc.sweeps = get<long>(cfg, "sweeps");
  cc.burn_in = get<long>(cfg, "burn_in");
  cc.width = get<double>(cfg, "width");
  cc.stride = get<int>(cfg, "stride");
  cc.seed = get<std::uint64_t>(cfg, "seed");
  try {
    cc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const int chains = get<int>(cfg, "chains");
  if (chains < 1) throw ConfigError("chains must be >= 1");
  Table t;
  t.columns = {"jxy", "euclid_norm", "G", "G_err"};
  if (cls.empty()) return t;
  const auto e = run_chains(m, bc, sh, cls, cc, chains, get<int>(cfg, "threads"));
  for (std::size_t k = 0; k < cls.size(); ++k) {
    const Site x = class_representative(cls[k], sh);
    t.rows.push_back({cls[k], euclid_norm(x), e.two_point[k].mean, e.two_point[k].err});
  }
  t.extra["chi"] = e.chi.mean;
  t.extra["chi_err"] = e.chi.err;
  t.extra["reliable"] = e.reliable;
  double acc = 0, drift = 0;
  for (const auto& c : e.chains) {
    acc += c.acceptance / chains;
    drift = std::max(drift, c.cache_drift);
  }
  t.extra["acceptance"] = acc;
  t.extra["max_cache_drift"] = drift;
  return t;
}

Table cmd_plateau(const json& cfg) {
  const Boundary bc = bc_of(cfg);
  const LatticeShape sh = shape_of(cfg, bc);
  const ModelParams m = model_of(cfg, false);
  if (!(m.g > 0)) throw ConfigError("plateau scans need g > 0");
  const auto cls = classes_of_cfg(cfg, sh);
  const auto ss = get<std::vector<double>>(cfg, "s");
  const auto nc = numerics_of(cfg);
  const int replicas = get<int>(cfg, "replicas");
  const auto regime_s = get<std::string>(cfg, "regime");
  Regime regime;
  if (regime_s == "non-gaussian")
    regime = Regime::NonGaussian;
  else if (regime_s == "gaussian")
    regime = Regime::Gaussian;
  else
    throw ConfigError("regime must be 'non-gaussian' or 'gaussian'");
  if (regime == Regime::Gaussian)
    for (double s : ss)
      if (!(s > 0)) throw ConfigError("Gaussian regime needs s > 0");
  std::vector<double> nu_star;
  if (!cfg.at("nu_star").is_null()) nu_star = get<std::vector<double>>(cfg, "nu_star");
  if (!nu_star.empty() && static_cast<int>(nu_star.size()) != replicas) throw ConfigError("nu_star needs one value per replica");
  const auto p = scale_params_of(cfg);
  Table t;
  t.columns = {"s", "jxy", "euclid_norm", "G", "G_err", "decay", "plateau", "predicted", "ratio"};
  if (cls.empty() || ss.empty()) return t;
  const auto res = two_point_scan(m, bc, regime, ss, cls, sh, nc, replicas, nu_star);
  for (const auto& r : res.rows) {
    const Site x = class_representative(r.cls, sh);
    const auto pr = regime == Regime::NonGaussian ? predict_plateau(x, r.s, p, bc) : predict_gaussian(x, r.s, p, bc);
    t.rows.push_back({r.s, r.cls, euclid_norm(x), r.G.mean, jnum(r.G.err), pr.decay_term, pr.plateau_term, pr.total, r.G.mean / pr.total});
  }
  t.extra["nu_star"] = res.nu_star;
  json chi = json::array();
  for (const auto& c : res.chi) chi.push_back({c.mean, jnum(c.err)});
  t.extra["chi"] = chi;
  t.extra["mass_split"] = res.mass_split;
  t.extra["max_lemma_ratio"] = res.max_lemma_ratio;
  t.extra["w_N"] = window_w(p);
  t.extra["v_N"] = shift_v(p);
  t.extra["h_N"] = large_field_h(p);
  return t;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical |phi|^4 two-point function toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  std::vector<std::unique_ptr<Command>> cmds;
  auto add = [&](const std::string& name, const std::string& desc) -> Command& {
    cmds.push_back(std::make_unique<Command>(app, name, desc));
    return *cmds.back();
  };

  auto& verify = add("verify", "run the identity suites (resolvent, sum rules, profiles, scales)");
  verify.opt<double>("inject_q", 1.0, "multiply the Laplacian constant q by this factor (fault injection)");
  verify.action(cmd_verify);

  auto& grn = add("green", "finite-volume Green function per coalescence class");
  lattice_opts(grn);
  grn.opt<std::string>("bc", "periodic", "boundary condition {free,periodic}").opt<double>("mass", nullptr, "mass a (default L^{-2N})");
  grn.list("classes", nullptr, "coalescence classes (default all)", true);
  grn.action(cmd_green);

  auto& prof = add("profile", "plateau profiles f_n(s) and moments");
  prof.list("n_list", json::array({1, 2, 3}), "component counts", true);
  prof.list("s", json::array({-2, -1, 0, 1, 2, 4}), "s values", false);
  prof.action(cmd_profile);

  auto& sc = add("scales", "scale parameters and predictions (JSON)");
  lattice_opts(sc);
  model_opts(sc);
  sc.list("s", json::array({0}), "s values", false);
  sc.always_json = true;
  sc.action(cmd_scales);

  auto& fl = add("flow", "perturbative running coupling");
  fl.opt<int>("d", 4, "dimension").opt<int>("L", 2, "block side").opt<int>("n", 1, "number of field components");
  fl.opt<double>("g", 0.05, "initial coupling g0").opt<double>("atilde", 0.0, "mass parameter").opt<int>("jmax", 1000, "last scale");
  fl.action(cmd_flow);

  auto& rg = add("rg-exact", "exact hierarchical RG two-point function");
  lattice_opts(rg);
  model_opts(rg);
  numerics_opts(rg);
  rg.opt<double>("nu", nullptr, "total quadratic coefficient nu").opt<double>("mass", nullptr, "covariance mass split (default fixed split)");
  rg.list("classes", nullptr, "coalescence classes (default all)", true);
  rg.opt<int>("replicas", 2, "independent replicas for error bars");
  rg.opt<std::string>("dump_effective", "", "write the effective potentials of replica 0 to this CSV file");
  rg.action(cmd_rg_exact);

  auto& mc = add("mcmc", "Metropolis sampling of the lattice field");
  lattice_opts(mc);
  model_opts(mc);
  mc.opt<double>("nu", nullptr, "total quadratic coefficient nu");
  mc.list("classes", nullptr, "coalescence classes (default all)", true);
  mc.opt<long>("sweeps", 20000, "measurement sweeps per chain").opt<long>("burn_in", 2000, "burn-in sweeps");
  mc.opt<double>("width", 1.0, "initial proposal width").opt<int>("stride", 1, "sweeps between measurements");
  mc.opt<int>("chains", 4, "independent chains").opt<std::uint64_t>("seed", 1, "random seed");
  mc.action(cmd_mcmc);

  auto& pl = add("plateau", "two-point scan against the plateau / Gaussian predictions");
  lattice_opts(pl);
  model_opts(pl);
  numerics_opts(pl);
  pl.opt<std::string>("regime", "non-gaussian", "scan regime {non-gaussian,gaussian}");
  pl.list("s", json::array({0}), "s values", false);
  pl.list("classes", nullptr, "coalescence classes (default all)", true);
  pl.opt<int>("replicas", 2, "independent replicas (each tunes its own nu*)");
  pl.list("nu_star", nullptr, "pre-tuned nu* per replica (skips tuning)", false);
  pl.action(cmd_plateau);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  for (const auto& c : cmds) {
    if (!c->app()->parsed()) continue;
    try {
      return c->execute();
    } catch (const ConfigError& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return kExitConfig;
    } catch (const std::invalid_argument& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return kExitConfig;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << '\n';
      return kExitDomain;
    }
  }
  return kExitConfig;
}
