#include "seqdesign/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "seqdesign/inverse.hpp"
#include "seqdesign/metrics.hpp"

namespace seqdesign::harness {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  return splitmix(splitmix(splitmix(a) ^ b) ^ c);
}

enum SeedTag : std::uint64_t { kObsTag = 11, kChainTag = 12, kOptTag = 13, kFitTag = 14, kMetricTag = 15, kRefTag = 16,
                          kMapTag = 17 };

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return {buf, end};
}

double parse_double(const std::string& s) {
  if (s.empty()) return kNaN;
  return parse_number(s, "record value");
}

int parse_int(const std::string& s) {
  int v = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw ConfigError("bad integer: " + s);
  return v;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

Vector vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Matrix mat_from(const json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  if (rows.empty()) throw ConfigError("empty matrix");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size()) throw ConfigError("ragged matrix");
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

optim::AnnealConfig parse_anneal(const json& j, optim::AnnealConfig base) {
  check_keys(j, {"max_evals", "n_restarts", "polish_evals", "probe_points", "step_scale", "step_decay",
                 "cooling_constant", "seed"},
             "optim");
  base.max_evals = j.value("max_evals", base.max_evals);
  base.n_restarts = j.value("n_restarts", base.n_restarts);
  base.polish_evals = j.value("polish_evals", base.polish_evals);
  base.probe_points = j.value("probe_points", base.probe_points);
  base.step_scale = j.value("step_scale", base.step_scale);
  base.step_decay = j.value("step_decay", base.step_decay);
  base.cooling_constant = j.value("cooling_constant", base.cooling_constant);
  base.seed = j.value("seed", base.seed);
  return base;
}

design::DesignStrategy parse_strategy(const json& j, const optim::AnnealConfig& default_optim) {
  json obj = j.is_string() ? json{{"kind", j.get<std::string>()}} : j;
  check_keys(obj, {"kind", "h", "beta", "m_int", "max_chain_samples", "optim"}, "strategy");
  std::string kind = obj.at("kind").get<std::string>();
  std::transform(kind.begin(), kind.end(), kind.begin(), [](unsigned char c) { return std::toupper(c); });
  design::DesignStrategy s;
  if (kind == "IPSUR" || kind == "IP-SUR") {
    s = design::DesignStrategy::ipsur(obj.value("beta", 1.0));
  } else if (kind == "CSQ") {
    s = design::DesignStrategy::csq(obj.value("h", 3.0));
  } else if (kind == "DOPT") {
    s = design::DesignStrategy::d_optimal();
  } else if (kind == "IOPT") {
    s = design::DesignStrategy::i_optimal(obj.value("m_int", 256));
  } else {
    throw ConfigError("unknown strategy kind: " + kind);
  }
  s.max_chain_samples = obj.value("max_chain_samples", s.max_chain_samples);
  s.optim = obj.contains("optim") ? parse_anneal(obj.at("optim"), default_optim) : default_optim;
  s.validate();
  return s;
}

class LineWriter {
 public:
  explicit LineWriter(const std::string& path) : out_(path, std::ios::app) {
    if (!out_) throw ConfigError("cannot append to " + path);
  }
  void write(const std::string& line) {
    std::lock_guard<std::mutex> lock(mutex_);
    out_ << line << '\n';
    out_.flush();
  }

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

// Chains start at the current MAP estimate.
Vector chain_start(const inverse::InverseProblem& ip, const optim::AnnealConfig& cfg, std::uint64_t seed) {
  optim::AnnealConfig c = cfg;
  c.seed = seed;
  c.max_evals = std::max(c.max_evals, 100);
  return inverse::find_map(ip, c).x;
}

struct Cell {
  int replicate;
  std::size_t strategy;
};

}  // namespace

void ExperimentConfig::validate() const {
  (void)testbeds::make_testbed(testbed, nuclear_data);
  if (strategies.empty()) throw ConfigError("at least one strategy is required");
  std::set<std::string> labels;
  for (const auto& s : strategies) {
    s.validate();
    if (!labels.insert(s.label()).second) throw ConfigError("duplicate strategy " + s.label());
  }
  if (n0 < 2) throw ConfigError("n0 must be >= 2");
  if (n_iterations < 0) throw ConfigError("n_iterations must be >= 0");
  if (n_replicates < 1) throw ConfigError("n_replicates must be >= 1");
  if (chain_length < 1000) throw ConfigError("chain_length must be >= 1000");
  if (reference_points != 0 && reference_points < 10) throw ConfigError("reference_points must be 0 or >= 10");
  if (reference_points > 0 && reference_chain_length < 1000) throw ConfigError("reference_chain_length must be >= 1000");
  if (n_obs < 0) throw ConfigError("n_obs must be >= 0");
  if (output_dir.empty()) throw ConfigError("output_dir is empty");
  nuclear_data.validate();
  optim.validate();
}

std::uint64_t ExperimentConfig::replicate_seed(int r) const {
  // splitmix is a bijection, so distinct replicate indices give distinct seeds.
  return splitmix(seed * 0x100000001b3ULL + static_cast<std::uint64_t>(r));
}

ExperimentConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid config JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  try {
    check_keys(j,
               {"testbed", "nuclear_data", "x_th", "obs_center", "c_obs", "n_obs", "strategies", "n0", "n_iterations",
                "n_replicates", "chain_length", "seed", "output_dir", "reference_points", "reference_chain_length",
                "kde_metrics", "kde_eval_points", "independent_metric_chain", "refit_every_iteration", "kernel",
                "nugget", "fit", "optim", "mcmc"},
               "config");
    cfg.testbed = j.value("testbed", cfg.testbed);
    if (j.contains("nuclear_data")) {
      const auto& nd = j.at("nuclear_data");
      check_keys(nd, {"nu_bar", "D2", "D3", "nu_bar_s", "D2s", "D3s"}, "nuclear_data");
      cfg.nuclear_data.nu_bar = nd.value("nu_bar", cfg.nuclear_data.nu_bar);
      cfg.nuclear_data.D2 = nd.value("D2", cfg.nuclear_data.D2);
      cfg.nuclear_data.D3 = nd.value("D3", cfg.nuclear_data.D3);
      cfg.nuclear_data.nu_bar_s = nd.value("nu_bar_s", cfg.nuclear_data.nu_bar_s);
      cfg.nuclear_data.D2s = nd.value("D2s", cfg.nuclear_data.D2s);
      cfg.nuclear_data.D3s = nd.value("D3s", cfg.nuclear_data.D3s);
    }
    if (j.contains("x_th")) cfg.x_th = vec_from(j.at("x_th"));
    if (j.contains("obs_center")) cfg.obs_center = vec_from(j.at("obs_center"));
    if (j.contains("c_obs")) cfg.c_obs = mat_from(j.at("c_obs"));
    cfg.n_obs = j.value("n_obs", cfg.n_obs);
    cfg.n0 = j.value("n0", cfg.n0);
    cfg.n_iterations = j.value("n_iterations", cfg.n_iterations);
    cfg.n_replicates = j.value("n_replicates", cfg.n_replicates);
    cfg.chain_length = j.value("chain_length", cfg.chain_length);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.reference_points = j.value("reference_points", cfg.reference_points);
    cfg.reference_chain_length = j.value("reference_chain_length", cfg.reference_chain_length);
    cfg.kde_metrics = j.value("kde_metrics", cfg.kde_metrics);
    cfg.kde_eval_points = j.value("kde_eval_points", cfg.kde_eval_points);
    cfg.independent_metric_chain = j.value("independent_metric_chain", cfg.independent_metric_chain);
    cfg.refit_every_iteration = j.value("refit_every_iteration", cfg.refit_every_iteration);
    if (j.contains("kernel")) cfg.kernel = gp::parse_kernel_family(j.at("kernel").get<std::string>());
    cfg.nugget = j.value("nugget", cfg.nugget);
    if (j.contains("fit")) {
      const auto& f = j.at("fit");
      check_keys(f, {"restarts", "max_iterations", "analytic_gradient"}, "fit");
      cfg.fit.restarts = f.value("restarts", cfg.fit.restarts);
      cfg.fit.max_iterations = f.value("max_iterations", cfg.fit.max_iterations);
      cfg.fit.analytic_gradient = f.value("analytic_gradient", cfg.fit.analytic_gradient);
    }
    if (j.contains("optim")) cfg.optim = parse_anneal(j.at("optim"), cfg.optim);
    if (j.contains("mcmc")) {
      const auto& m = j.at("mcmc");
      check_keys(m, {"burn_in_fraction", "adapt_start", "epsilon", "initial_scale"}, "mcmc");
      cfg.mcmc.burn_in_fraction = m.value("burn_in_fraction", cfg.mcmc.burn_in_fraction);
      cfg.mcmc.adapt_start = m.value("adapt_start", cfg.mcmc.adapt_start);
      cfg.mcmc.epsilon = m.value("epsilon", cfg.mcmc.epsilon);
      cfg.mcmc.initial_scale = m.value("initial_scale", cfg.mcmc.initial_scale);
    }
    if (!j.contains("strategies")) throw ConfigError("config needs a 'strategies' list");
    for (const auto& s : j.at("strategies")) cfg.strategies.push_back(parse_strategy(s, cfg.optim));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Record CSV

std::string record_header() {
  return "# seqdesign record schema " + std::to_string(kRecordSchemaVersion) +
         "\nstrategy,replicate,iteration,ivar,entropy,kl,x_selected,criterion,acceptance_rate,wall_time_s,status";
}

std::string format_row(const RecordRow& row) {
  std::ostringstream os;
  os << row.strategy << ',' << row.replicate << ',' << row.iteration << ',' << fmt(row.ivar) << ','
     << fmt(row.entropy) << ',' << fmt(row.kl) << ',';
  for (Eigen::Index i = 0; i < row.x_selected.size(); ++i) os << (i ? " " : "") << fmt(row.x_selected[i]);
  os << ',' << fmt(row.criterion) << ',' << fmt(row.acceptance_rate) << ',' << fmt(row.wall_time_s) << ','
     << sanitize(row.status);
  return os.str();
}

std::vector<RecordRow> read_record(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read record " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# seqdesign record schema ", 0) != 0) {
    throw ConfigError("not a seqdesign record: " + path);
  }
  if (parse_int(line.substr(26)) != kRecordSchemaVersion) throw ConfigError("unsupported record schema in " + path);
  if (!std::getline(in, line)) throw ConfigError("record without header: " + path);
  std::vector<RecordRow> rows;
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    // Every row is written with its newline; a final line without one is torn.
    if (in.eof()) break;
    const auto f = split(line, ',');
    if (f.size() != 11) throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 11 fields");
    RecordRow r;
    r.strategy = f[0];
    r.replicate = parse_int(f[1]);
    r.iteration = parse_int(f[2]);
    r.ivar = parse_double(f[3]);
    r.entropy = parse_double(f[4]);
    r.kl = parse_double(f[5]);
    if (!f[6].empty()) {
      const auto parts = split(f[6], ' ');
      r.x_selected.resize(static_cast<Eigen::Index>(parts.size()));
      for (std::size_t i = 0; i < parts.size(); ++i) r.x_selected[static_cast<Eigen::Index>(i)] = parse_double(parts[i]);
    }
    r.criterion = parse_double(f[7]);
    r.acceptance_rate = parse_double(f[8]);
    r.wall_time_s = parse_double(f[9]);
    r.status = f[10];
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Experiment

inverse::ObservationSet experiment_observations(const ExperimentConfig& cfg, const testbeds::DirectModel& model) {
  testbeds::ObservationSetup setup = testbeds::default_observation_setup(model);
  if (cfg.x_th) setup.center = model.eval(*cfg.x_th);
  if (cfg.obs_center) setup.center = *cfg.obs_center;
  if (cfg.c_obs) setup.c_obs = *cfg.c_obs;
  if (cfg.n_obs > 0) setup.n = cfg.n_obs;
  if (cfg.x_th && !model.box.contains(*cfg.x_th)) throw ConfigError("x_th lies outside the box");
  return testbeds::make_observations(setup.center, setup.c_obs, setup.n, mix(cfg.seed, kObsTag));
}

namespace {

gp::KernelSpec initial_spec(const ExperimentConfig& cfg, const testbeds::DirectModel& model) {
  return gp::KernelSpec::make_default(cfg.kernel, 0.3 * model.box.width(), model.output_dim, 1.0, cfg.nugget);
}

}  // namespace

Matrix reference_chain(const ExperimentConfig& cfg, const testbeds::DirectModel& model,
                       const inverse::ObservationSet& obs) {
  const Matrix x = testbeds::initial_design(model.box, cfg.reference_points, mix(cfg.seed, kRefTag));
  const Matrix z = model.eval_rows(x);
  gp::FitOptions fo = cfg.fit;
  fo.seed = mix(cfg.seed, kRefTag, 1);
  const auto fit = gp::fit_hyperparameters(initial_spec(cfg, model), x, z, gp::HyperBounds::for_box(model.box), fo);
  auto surrogate = std::make_shared<const gp::TrainedGP>(gp::condition(fit.spec, x, z));
  const inverse::InverseProblem ip(obs, surrogate, model.box);
  mcmc::AdaptiveMetropolisConfig mc = cfg.mcmc;
  mc.length = cfg.reference_chain_length;
  mc.seed = mix(cfg.seed, kRefTag, 2);
  return mcmc::adaptive_metropolis([&](const Vector& v) { return ip.log_posterior(v); }, model.box,
                                   chain_start(ip, cfg.optim, mix(cfg.seed, kRefTag, 3)), mc)
      .samples;
}

namespace {

struct CellContext {
  const ExperimentConfig& cfg;
  const testbeds::DirectModel& model;
  const inverse::ObservationSet& obs;
  const Matrix& reference;
  LineWriter& record;
  LineWriter& selections;
};

// Returns true on success; failures are written as a status row.
bool run_cell(const CellContext& ctx, const Cell& cell, bool& numerical) {
  const auto& cfg = ctx.cfg;
  const auto& model = ctx.model;
  const auto& strategy = cfg.strategies[cell.strategy];
  const std::string label = strategy.label();
  const std::uint64_t rep_seed = cfg.replicate_seed(cell.replicate);
  int iteration = 0;
  try {
    // The initial design depends on the replicate only, so strategies are paired.
    Matrix inputs = testbeds::initial_design(model.box, cfg.n0, rep_seed);
    Matrix outputs = model.eval_rows(inputs);
    const gp::HyperBounds bounds = gp::HyperBounds::for_box(model.box);
    gp::FitOptions fo = cfg.fit;
    fo.seed = mix(rep_seed, kFitTag);
    gp::KernelSpec spec = gp::fit_hyperparameters(initial_spec(cfg, model), inputs, outputs, bounds, fo).spec;
    auto surrogate = std::make_shared<const gp::TrainedGP>(gp::condition(spec, inputs, outputs));

    for (iteration = 0; iteration <= cfg.n_iterations; ++iteration) {
      const inverse::InverseProblem ip(ctx.obs, surrogate, model.box);
      const auto logpdf = [&](const Vector& v) { return ip.log_posterior(v); };
      mcmc::AdaptiveMetropolisConfig mc = cfg.mcmc;
      mc.length = cfg.chain_length;
      mc.seed = mix(rep_seed, kChainTag, static_cast<std::uint64_t>(iteration));
      const auto it_tag = static_cast<std::uint64_t>(iteration);
      const Vector start = chain_start(ip, cfg.optim, mix(rep_seed, kMapTag, it_tag));
      const mcmc::PosteriorChain chain = mcmc::adaptive_metropolis(logpdf, model.box, start, mc);

      const mcmc::PosteriorChain* metric_chain = &chain;
      mcmc::PosteriorChain independent;
      if (cfg.independent_metric_chain) {
        mc.seed = mix(rep_seed, kMetricTag, static_cast<std::uint64_t>(iteration));
        independent = mcmc::adaptive_metropolis(logpdf, model.box, start, mc);
        metric_chain = &independent;
      }

      RecordRow row;
      row.strategy = label;
      row.replicate = cell.replicate;
      row.iteration = iteration;
      row.ivar = metrics::ivar(*surrogate, *metric_chain);
      row.entropy = kNaN;
      row.kl = kNaN;
      if (cfg.kde_metrics) {
        metrics::KdeOptions ko;
        ko.max_eval_points = cfg.kde_eval_points;
        ko.floor_scale = model.box.diameter();
        row.entropy = metrics::entropy_kde(metric_chain->samples, ko);
        if (ctx.reference.rows() > 0) row.kl = metrics::kl_kde(metric_chain->samples, ctx.reference, ko);
      }
      row.acceptance_rate = chain.acceptance_rate;
      row.criterion = kNaN;

      if (iteration < cfg.n_iterations) {
        design::DesignStrategy s = strategy;
        s.optim.seed = mix(rep_seed, kOptTag, static_cast<std::uint64_t>(iteration));
        const design::SelectionResult sel = design::select_next(s, ip, chain);
        row.x_selected = sel.x;
        row.criterion = sel.criterion;
        row.wall_time_s = sel.wall_seconds;
        json rec = json::parse(design::selection_record_json(sel, iteration));
        rec["replicate"] = cell.replicate;
        ctx.selections.write(rec.dump());

        const Vector z = model.eval(sel.x);
        inputs.conservativeResize(inputs.rows() + 1, Eigen::NoChange);
        inputs.row(inputs.rows() - 1) = sel.x.transpose();
        outputs.conservativeResize(outputs.rows() + 1, Eigen::NoChange);
        outputs.row(outputs.rows() - 1) = z.transpose();
        if (cfg.refit_every_iteration) {
          gp::FitOptions warm = cfg.fit;
          warm.seed = mix(rep_seed, kFitTag, static_cast<std::uint64_t>(iteration + 1));
          spec = gp::fit_hyperparameters(spec, inputs, outputs, bounds, warm).spec;
          surrogate = std::make_shared<const gp::TrainedGP>(gp::condition(spec, inputs, outputs));
        } else {
          surrogate = std::make_shared<const gp::TrainedGP>(surrogate->with_point(sel.x, z));
        }
      }
      ctx.record.write(format_row(row));
    }
    return true;
  } catch (const std::exception& e) {
    numerical = dynamic_cast<const NumericalError*>(&e) != nullptr;
    RecordRow row;
    row.strategy = label;
    row.replicate = cell.replicate;
    row.iteration = iteration;
    row.ivar = row.entropy = row.kl = row.criterion = row.acceptance_rate = kNaN;
    row.status = std::string("failed: ") + e.what();
    ctx.record.write(format_row(row));
    return false;
  }
}

}  // namespace

int thread_count() {
  if (const char* env = std::getenv("SEQDESIGN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(std::min(v, 256L));
    throw ConfigError(std::string("SEQDESIGN_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max(1, static_cast<int>(std::thread::hardware_concurrency()));
}

RunSummary run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const testbeds::DirectModel model = testbeds::make_testbed(cfg.testbed, cfg.nuclear_data);
  const inverse::ObservationSet obs = experiment_observations(cfg, model);

  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw ConfigError("cannot create " + cfg.output_dir + ": " + ec.message());
  RunSummary summary;
  summary.record_path = (fs::path(cfg.output_dir) / "record.csv").string();
  const std::string selections_path = (fs::path(cfg.output_dir) / "selections.jsonl").string();
  const std::string reference_path = (fs::path(cfg.output_dir) / "reference_chain.csv").string();

  // Resume: keep complete or failed cells, drop partial ones.
  std::set<std::pair<std::string, int>> done;
  if (fs::exists(summary.record_path)) {
    const auto rows = read_record(summary.record_path);
    std::map<std::pair<std::string, int>, std::vector<const RecordRow*>> by_cell;
    for (const auto& r : rows) by_cell[{r.strategy, r.replicate}].push_back(&r);
    std::vector<const RecordRow*> kept;
    for (const auto& [key, cell_rows] : by_cell) {
      const bool failed = std::any_of(cell_rows.begin(), cell_rows.end(),
                                      [](const RecordRow* r) { return r->status != "ok"; });
      if (failed || static_cast<int>(cell_rows.size()) == cfg.n_iterations + 1) {
        done.insert(key);
        kept.insert(kept.end(), cell_rows.begin(), cell_rows.end());
      }
    }
    // Rewritten even when nothing was dropped, so a torn tail never precedes new rows.
    {
      const std::string tmp = summary.record_path + ".tmp";
      {
        std::ofstream out(tmp);
        out << record_header() << '\n';
        for (const auto* r : kept) out << format_row(*r) << '\n';
      }
      fs::rename(tmp, summary.record_path);
      if (fs::exists(selections_path)) {
        std::ifstream in(selections_path);
        std::ofstream out(selections_path + ".tmp");
        for (std::string line; std::getline(in, line);) {
          try {
            const json rec = json::parse(line);
            if (done.count({rec.at("strategy").get<std::string>(), rec.at("replicate").get<int>()})) out << line << '\n';
          } catch (const json::exception&) {
            // torn line from an interrupted run
          }
        }
        out.close();
        fs::rename(selections_path + ".tmp", selections_path);
      }
    }
  } else {
    std::ofstream out(summary.record_path);
    if (!out) throw ConfigError("cannot write " + summary.record_path);
    out << record_header() << '\n';
    std::ofstream(selections_path, std::ios::trunc);
  }

  std::vector<Cell> todo;
  for (int r = 0; r < cfg.n_replicates; ++r) {
    for (std::size_t s = 0; s < cfg.strategies.size(); ++s) {
      if (done.count({cfg.strategies[s].label(), r})) {
        ++summary.cells_skipped;
      } else {
        todo.push_back({r, s});
      }
    }
  }
  if (todo.empty()) return summary;

  Matrix reference;
  if (cfg.kde_metrics && cfg.reference_points > 0) {
    if (fs::exists(reference_path)) {
      reference = mcmc::load_chain_csv(reference_path).samples;
    } else {
      const Matrix samples = reference_chain(cfg, model, obs);
      mcmc::PosteriorChain pc;
      pc.samples = samples;
      pc.log_densities = Vector::Zero(samples.rows());
      mcmc::save_chain_csv(pc, reference_path);
      reference = samples;
    }
  }

  LineWriter record(summary.record_path);
  LineWriter selections(selections_path);
  const CellContext ctx{cfg, model, obs, reference, record, selections};

  std::atomic<std::size_t> next{0};
  std::atomic<int> failed{0};
  std::atomic<int> numerical{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < todo.size(); i = next++) {
      bool num = false;
      if (!run_cell(ctx, todo[i], num)) {
        ++failed;
        if (num) ++numerical;
      }
    }
  };
  const int n_threads = std::min<int>(thread_count(), static_cast<int>(todo.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  summary.cells_run = static_cast<int>(todo.size());
  summary.cells_failed = failed;
  summary.numerical_failures = numerical;
  return summary;
}

// ---------------------------------------------------------------------------
// Summary

std::vector<SummaryRow> summarize(const std::vector<RecordRow>& rows) {
  using Key = std::tuple<std::string, std::string, int>;
  std::map<Key, std::vector<double>> values;
  std::vector<std::string> strategy_order;
  for (const auto& r : rows) {
    if (r.status != "ok") continue;
    if (std::find(strategy_order.begin(), strategy_order.end(), r.strategy) == strategy_order.end()) {
      strategy_order.push_back(r.strategy);
    }
    const std::pair<const char*, double> metrics[] = {
        {"ivar", r.ivar}, {"entropy", r.entropy}, {"kl", r.kl}, {"acceptance_rate", r.acceptance_rate},
        {"wall_time_s", r.x_selected.size() > 0 ? r.wall_time_s : kNaN}};
    for (const auto& [name, v] : metrics) {
      if (std::isfinite(v)) values[{r.strategy, name, r.iteration}].push_back(v);
    }
  }
  std::vector<SummaryRow> out;
  for (const auto& strategy : strategy_order) {
    for (const char* metric : {"ivar", "entropy", "kl", "acceptance_rate", "wall_time_s"}) {
      for (const auto& [key, v] : values) {
        if (std::get<0>(key) != strategy || std::get<1>(key) != metric) continue;
        SummaryRow s;
        s.strategy = strategy;
        s.metric = metric;
        s.iteration = std::get<2>(key);
        s.n = static_cast<int>(v.size());
        double sum = 0.0;
        for (double x : v) sum += x;
        s.mean = sum / s.n;
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.sd = s.n > 1 ? std::sqrt(ss / (s.n - 1)) : 0.0;
        const double half = s.n > 1 ? 1.96 * s.sd / std::sqrt(static_cast<double>(s.n)) : 0.0;
        s.ci_lo = s.mean - half;
        s.ci_hi = s.mean + half;
        s.degenerate = s.n < 2;
        out.push_back(s);
      }
    }
  }
  return out;
}

void write_summary(const std::vector<SummaryRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "strategy,metric,iteration,n,mean,sd,ci_lo,ci_hi,degenerate\n";
  for (const auto& r : rows) {
    out << r.strategy << ',' << r.metric << ',' << r.iteration << ',' << r.n << ',' << fmt(r.mean) << ','
        << fmt(r.sd) << ',' << fmt(r.ci_lo) << ',' << fmt(r.ci_hi) << ',' << (r.degenerate ? 1 : 0) << '\n';
  }
}

std::vector<SummaryRow> read_summary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read summary " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("strategy,metric,iteration", 0) != 0) {
    throw ConfigError("not a summary file: " + path);
  }
  std::vector<SummaryRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 9) throw ConfigError("malformed summary line: " + line);
    SummaryRow r;
    r.strategy = f[0];
    r.metric = f[1];
    r.iteration = parse_int(f[2]);
    r.n = parse_int(f[3]);
    r.mean = parse_double(f[4]);
    r.sd = parse_double(f[5]);
    r.ci_lo = parse_double(f[6]);
    r.ci_hi = parse_double(f[7]);
    r.degenerate = f[8] == "1";
    rows.push_back(r);
  }
  return rows;
}

}  // namespace seqdesign::harness
