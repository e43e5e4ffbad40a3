#include "beamunfold/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <system_error>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "beamunfold/bench.hpp"
#include "beamunfold/deepfp.hpp"
#include "beamunfold/parallel.hpp"
#include "beamunfold/solvers.hpp"

#ifndef BEAMUNFOLD_REVISION
#define BEAMUNFOLD_REVISION "unknown"
#endif

namespace beamunfold::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::ConfigError:
    case ErrorKind::EmptyDataset:
      return kUsage;
    case ErrorKind::IoError:
    case ErrorKind::FormatError:
    case ErrorKind::FormatVersionMismatch:
    case ErrorKind::ChecksumMismatch:
      return kIo;
    case ErrorKind::DivergedTraining:
      return kDiverged;
    case ErrorKind::WidthMismatch:
      return kWidth;
    default:
      return kSolver;
  }
}

// ---- config -----------------------------------------------------------------

namespace {

[[noreturn]] void config_error(std::size_t line, const std::string& msg) {
  throw Error(ErrorKind::ConfigError, "line " + std::to_string(line) + ": " + msg);
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(std::string_view s, std::size_t line, const std::string& key) {
  s = trim(s);
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty() || !std::isfinite(v))
    config_error(line, key + ": not a number: '" + std::string(s) + "'");
  return v;
}

std::uint32_t parse_count(std::string_view s, std::size_t line, const std::string& key) {
  s = trim(s);
  std::uint32_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty())
    config_error(line, key + ": not a non-negative integer: '" + std::string(s) + "'");
  return v;
}

std::vector<double> parse_list(std::string_view s, std::size_t line, const std::string& key) {
  std::vector<double> out;
  while (true) {
    const auto comma = s.find(',');
    out.push_back(parse_double(s.substr(0, comma), line, key));
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

std::vector<double> broadcast(const std::vector<double>& v, std::size_t n, const char* key) {
  if (v.size() == n) return v;
  if (v.size() == 1) return std::vector<double>(n, v[0]);
  throw Error(ErrorKind::ConfigError, std::string(key) + ": expected 1 or " + std::to_string(n) +
                                          " values, got " + std::to_string(v.size()));
}

}  // namespace

NetworkConfig parse_config(std::string_view text) {
  std::map<std::string, std::pair<std::string, std::size_t>> kv;
  std::size_t lineno = 0;
  while (!text.empty()) {
    ++lineno;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) config_error(lineno, "expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) config_error(lineno, "empty key");
    if (value.empty()) config_error(lineno, key + ": empty value");
    if (!kv.emplace(key, std::make_pair(value, lineno)).second) config_error(lineno, "repeated key " + key);
  }

  static const char* const kKnown[] = {"L",     "K",          "Nt",     "Nr",
                                       "d",     "weights",    "P",      "P_dbm",
                                       "sigma2", "sigma2_dbm", "cell_distance_km",
                                       "shadowing_std_db"};
  for (const auto& [key, entry] : kv)
    if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown))
      config_error(entry.second, "unknown key " + key);
  for (const char* req : {"L", "K", "Nt", "Nr", "d"})
    if (!kv.count(req)) throw Error(ErrorKind::ConfigError, std::string("missing key ") + req);
  if (kv.count("P") && kv.count("P_dbm")) throw Error(ErrorKind::ConfigError, "give P or P_dbm, not both");
  if (kv.count("sigma2") && kv.count("sigma2_dbm"))
    throw Error(ErrorKind::ConfigError, "give sigma2 or sigma2_dbm, not both");

  auto count = [&](const char* k) { return parse_count(kv[k].first, kv[k].second, k); };
  NetworkConfig c;
  c.L = count("L");
  c.K = count("K");
  c.Nt = count("Nt");
  c.Nr = count("Nr");
  c.d = count("d");
  c.weights.assign(c.users(), 1.0);
  c.power.assign(c.L, dbm_to_mw(20.0));
  c.noise = dbm_to_mw(-90.0);
  auto list = [&](const char* k) { return parse_list(kv[k].first, kv[k].second, k); };
  if (kv.count("weights")) c.weights = broadcast(list("weights"), c.users(), "weights");
  if (kv.count("P")) c.power = broadcast(list("P"), c.L, "P");
  if (kv.count("P_dbm")) {
    c.power = broadcast(list("P_dbm"), c.L, "P_dbm");
    for (auto& p : c.power) p = dbm_to_mw(p);
  }
  if (kv.count("sigma2")) c.noise = parse_double(kv["sigma2"].first, kv["sigma2"].second, "sigma2");
  if (kv.count("sigma2_dbm"))
    c.noise = dbm_to_mw(parse_double(kv["sigma2_dbm"].first, kv["sigma2_dbm"].second, "sigma2_dbm"));
  if (kv.count("cell_distance_km"))
    c.cell_distance_km =
        parse_double(kv["cell_distance_km"].first, kv["cell_distance_km"].second, "cell_distance_km");
  if (kv.count("shadowing_std_db"))
    c.shadowing_std_db =
        parse_double(kv["shadowing_std_db"].first, kv["shadowing_std_db"].second, "shadowing_std_db");
  if (c.L > 7) throw Error(ErrorKind::ConfigError, "L must be at most 7");
  try {
    c.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::ConfigError, e.what());
  }
  return c;
}

NetworkConfig load_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---- distributions ------------------------------------------------------------

Histogram histogram(std::span<const double> values, std::size_t bins) {
  Histogram h;
  if (values.empty() || bins == 0) return h;
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double lo = *mn;
  double hi = *mx;
  if (hi == lo) hi = lo + 1.0;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    h.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  h.edges[bins] = hi;
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    ++h.counts[std::min(b, bins - 1)];
  }
  return h;
}

Cdf empirical_cdf(std::span<const double> values) {
  Cdf c;
  c.x.assign(values.begin(), values.end());
  std::sort(c.x.begin(), c.x.end());
  const std::size_t n = c.x.size();
  c.p.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.p[i] = static_cast<double>(i + 1) / static_cast<double>(n);
  return c;
}

// ---- shared plumbing -----------------------------------------------------------

namespace {

constexpr double kLn2 = std::numbers::ln2;

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << text;
    if (!out.flush()) throw Error(ErrorKind::IoError, "short write to " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot rename onto " + path.string() + ": " + ec.message());
}

fs::path manifest_path(const fs::path& out) {
  fs::path m = out;
  m += ".manifest.json";
  return m;
}

fs::path csv_path(const fs::path& out) {
  fs::path c = out;
  c += ".csv";
  return c;
}

json config_json(const NetworkConfig& c) {
  return {{"L", c.L},
          {"K", c.K},
          {"Nt", c.Nt},
          {"Nr", c.Nr},
          {"d", c.d},
          {"weights", c.weights},
          {"P", c.power},
          {"sigma2", c.noise},
          {"cell_distance_km", c.cell_distance_km},
          {"shadowing_std_db", c.shadowing_std_db}};
}

/// Sidecar describing how the primary output was produced.
struct Manifest {
  std::string command;
  std::vector<std::string> args;
  json config = json::object();
  json seeds = json::object();
  std::vector<std::string> outputs;
  std::string started = utc_now();
  Clock::time_point t0 = Clock::now();

  void write(const fs::path& primary) const {
    json j;
    j["command"] = command;
    j["args"] = args;
    j["config"] = config;
    j["seeds"] = seeds;
    j["revision"] = BEAMUNFOLD_REVISION;
    j["started_utc"] = started;
    j["finished_utc"] = utc_now();
    j["wall_ms"] =
        std::chrono::duration_cast<std::chrono::milliseconds>(Clock::now() - t0).count();
    j["outputs"] = outputs;
    write_text_atomic(manifest_path(primary), j.dump(2) + "\n");
  }
};

std::size_t pick_threads(bool serial, std::size_t requested) {
  if (serial) return 1;
  return requested > 0 ? requested : default_threads();
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v.size())));
  return v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
}

double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

json distribution_json(std::span<const double> values, std::size_t bins) {
  const Histogram h = histogram(values, bins);
  const Cdf c = empirical_cdf(values);
  return {{"histogram", {{"edges", h.edges}, {"counts", h.counts}}},
          {"cdf", {{"x", c.x}, {"p", c.p}}}};
}

// ---- gen-data --------------------------------------------------------------------

struct GenDataArgs {
  std::string config;
  std::size_t samples = 0;
  std::uint64_t seed = 1;
  std::string out;
  std::string fading = "shadowed";
  std::size_t threads = 0;
};

int cmd_gen_data(const GenDataArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  Manifest m;
  m.command = "gen-data";
  m.args = argv;
  const NetworkConfig cfg = load_config(a.config);
  const Fading fading = a.fading == "rayleigh" ? Fading::Rayleigh : Fading::Shadowed;
  const auto samples = generate_samples(cfg, fading, a.samples, a.seed, pick_threads(false, a.threads));
  save_dataset(a.out, cfg, samples, fading);
  m.config = config_json(cfg);
  m.config["fading"] = a.fading;
  m.seeds = {{"dataset", a.seed}};
  m.outputs = {a.out};
  m.write(a.out);
  out << "wrote " << samples.size() << " samples to " << a.out << "\n";
  return kOk;
}

// ---- solve -----------------------------------------------------------------------

struct SolveArgs {
  std::string algo = "fastfp";
  std::string data;
  std::size_t iters = 100;
  double tol = 1e-6;
  std::string policy = "eigen";
  std::string out;
  bool serial = false;
  std::size_t threads = 0;
};

int cmd_solve(const SolveArgs& a, const std::vector<std::string>& argv, std::ostream& out,
              std::ostream& err) {
  Manifest m;
  m.command = "solve";
  m.args = argv;
  const Dataset data = load_dataset(a.data);
  m.config = config_json(data.config);
  SolveOptions opts;
  opts.max_iters = a.iters;
  opts.tol = a.tol;
  opts.policy = parse_stepsize_policy(a.policy);

  const std::size_t n = data.samples.size();
  const auto v0 = starting_points(data);
  std::vector<std::optional<SolveTrace>> traces(n);
  std::vector<std::string> failures(n);
  std::vector<double> wall_ms(n, 0.0);
  parallel_for(n, pick_threads(a.serial, a.threads), [&](std::size_t i) {
    const auto t0 = Clock::now();
    try {
      if (a.algo == "fp")
        traces[i] = fp_solve(data.samples[i], data.config, v0[i], opts);
      else if (a.algo == "fastfp")
        traces[i] = fastfp_solve(data.samples[i], data.config, v0[i], opts);
      else
        traces[i] = wmmse_sc_solve(data.samples[i], data.config, v0[i], opts);
    } catch (const Error& e) {
      failures[i] = e.what();
    }
    wall_ms[i] = ms_since(t0);
  });

  json doc;
  doc["manifest"] = manifest_path(a.out).filename().string();
  doc["algorithm"] = a.algo;
  doc["samples"] = n;
  json arr = json::array();
  std::ostringstream csv;
  csv << "# manifest: " << manifest_path(a.out).filename().string() << "\n";
  csv << "sample,seed,status,initial_wsr_bits,final_wsr_bits,iterations,converged,wall_ms\n";
  std::vector<double> finals, initials, walls, iters;
  std::size_t failed = 0, converged = 0;
  std::string first_error;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint64_t seed = data.samples[i].seed;
    if (!traces[i]) {
      ++failed;
      if (first_error.empty()) first_error = failures[i];
      arr.push_back({{"sample", i}, {"seed", seed}, {"status", "failed"}, {"error", failures[i]}});
      csv << i << "," << seed << ",failed,,,,," << fmt(wall_ms[i]) << "\n";
      continue;
    }
    const SolveTrace& t = *traces[i];
    json tj = json::parse(to_json(t));
    tj["sample"] = i;
    tj["seed"] = seed;
    tj["status"] = "ok";
    tj["wall_ms"] = wall_ms[i];
    arr.push_back(std::move(tj));
    finals.push_back(t.final_wsr());
    initials.push_back(t.initial_wsr);
    walls.push_back(wall_ms[i]);
    iters.push_back(static_cast<double>(t.iterations));
    converged += t.converged ? 1 : 0;
    csv << i << "," << seed << ",ok," << fmt(t.initial_wsr / kLn2) << "," << fmt(t.final_wsr() / kLn2)
        << "," << t.iterations << "," << (t.converged ? 1 : 0) << "," << fmt(wall_ms[i]) << "\n";
  }
  const double mean_nats = mean(finals);
  doc["status"] = failed ? "failed" : "ok";
  if (failed) {
    doc["failed_samples"] = failed;
    doc["error"] = first_error;
  }
  doc["summary"] = {{"mean_wsr_nats", mean_nats},
                    {"mean_wsr_bits", mean_nats / kLn2},
                    {"mean_initial_wsr_bits", mean(initials) / kLn2},
                    {"mean_iterations", mean(iters)},
                    {"converged", converged},
                    {"mean_wall_ms", mean(walls)},
                    {"wall_ms_p50", percentile(walls, 0.5)},
                    {"wall_ms_p90", percentile(walls, 0.9)},
                    {"wall_ms_p99", percentile(walls, 0.99)}};
  doc["traces"] = std::move(arr);
  write_text_atomic(a.out, doc.dump(2) + "\n");
  write_text_atomic(csv_path(a.out), csv.str());
  m.outputs = {a.out, csv_path(a.out).string()};
  m.seeds = {{"initial_point", "per-sample from dataset seeds"}};
  m.write(a.out);
  if (failed) {
    err << "solve: " << failed << " of " << n << " samples failed: " << first_error << "\n";
    return kSolver;
  }
  out << "mean WSR " << fmt(mean_nats / kLn2) << " bits over " << n << " samples\n";
  return kOk;
}

// ---- train -----------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string val;
  std::uint32_t layers = 8;
  std::string out;
  std::size_t epochs = 50;
  std::size_t batch = 200;
  double lr = 0.005;
  std::size_t lr_halving = 20;
  double stage1_fraction = 0.6;
  std::size_t label_iters = 100;
  std::uint64_t seed = 1;
  std::uint32_t hidden_width = 16;
  std::uint32_t hidden_layers = 2;
  std::string scaling = "trace";
  std::string resume;
  std::optional<std::size_t> stop_after;
  std::string log;
  bool serial = false;
  std::size_t threads = 0;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  Manifest m;
  m.command = "train";
  m.args = argv;
  const Dataset train_set = load_dataset(a.data);
  const Dataset val_set = a.val.empty() ? Dataset{train_set.config, train_set.fading, {}}
                                        : load_dataset(a.val);
  m.config = config_json(train_set.config);

  TrainConfig tc;
  tc.batch_size = a.batch;
  tc.initial_lr = a.lr;
  tc.lr_halving_epochs = a.lr_halving;
  tc.epochs = a.epochs;
  tc.stage1_fraction = a.stage1_fraction;
  tc.label_solver_iters = a.label_iters;
  tc.seed = a.seed;
  tc.threads = pick_threads(a.serial, a.threads);
  tc.stop_after_epoch = a.stop_after;

  NetArch arch;
  arch.T = a.layers;
  arch.Nt = train_set.config.Nt;
  arch.d = train_set.config.d;
  arch.hidden_width = a.hidden_width;
  arch.hidden_layers = a.hidden_layers;
  arch.scaling = a.scaling == "raw" ? StepsizeScaling::Raw : StepsizeScaling::Trace;

  std::optional<TrainState> resume;
  StepsizeNet init;
  if (!a.resume.empty()) {
    Checkpoint ck = load_checkpoint(a.resume);
    if (!ck.state) throw Error(ErrorKind::InvalidArgument, a.resume + " holds no training state");
    resume = std::move(ck.state);
    init = resume->current;
  } else {
    init = StepsizeNet::initialize(arch, derive_seed(a.seed, 0x6e6574));
  }

  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log, resume ? std::ios::app : std::ios::trunc);
    if (!log) throw Error(ErrorKind::IoError, "cannot open log " + a.log);
  }
  const auto on_epoch = [&](const EpochLog& e) {
    const std::string line = to_json_line(e);
    if (log.is_open()) log << line << "\n" << std::flush;
    out << line << "\n";
  };
  const TrainResult r = train(init, train_set, val_set, tc, on_epoch, resume ? &*resume : nullptr);
  save_checkpoint(a.out, r.best, &r.state);
  m.seeds = {{"train", a.seed}, {"init", derive_seed(a.seed, 0x6e6574)}};
  m.outputs = {a.out};
  if (!a.log.empty()) m.outputs.push_back(a.log);
  m.write(a.out);
  out << (r.finished ? "finished" : "stopped") << " after " << r.state.epochs_done
      << " epochs; best validation WSR " << fmt(r.state.best_val / kLn2) << " bits\n";
  return kOk;
}

// ---- eval ------------------------------------------------------------------------

struct EvalArgs {
  std::string model;
  bool stub_eigen = false;
  std::uint32_t layers = 0;
  std::string data;
  std::string baseline;
  std::string out;
  std::size_t bins = 20;
  bool pad_experimental = false;
  bool serial = false;
  std::size_t threads = 0;
};

std::size_t parse_baseline(const std::string& s) {
  constexpr std::string_view prefix = "fastfp@";
  if (s.rfind(prefix, 0) != 0)
    throw Error(ErrorKind::InvalidArgument, "baseline must look like fastfp@N, got " + s);
  std::size_t n = 0;
  const char* b = s.data() + prefix.size();
  const char* e = s.data() + s.size();
  const auto [p, ec] = std::from_chars(b, e, n);
  if (ec != std::errc() || p != e || b == e)
    throw Error(ErrorKind::InvalidArgument, "baseline must look like fastfp@N, got " + s);
  return n;
}

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  Manifest m;
  m.command = "eval";
  m.args = argv;
  const Dataset data = load_dataset(a.data);
  m.config = config_json(data.config);

  std::optional<StepsizeNet> net;
  std::size_t T = a.layers;
  if (a.stub_eigen) {
    if (T == 0) throw Error(ErrorKind::InvalidArgument, "--stub-eigen needs --layers >= 1");
  } else {
    if (a.model.empty()) throw Error(ErrorKind::InvalidArgument, "give --model or --stub-eigen");
    net = load_checkpoint(a.model).net;
    if (net->arch.Nt != data.config.Nt || net->arch.d != data.config.d) {
      if (!a.pad_experimental)
        throw Error(ErrorKind::WidthMismatch,
                    "model was trained for Nt=" + std::to_string(net->arch.Nt) +
                        ", d=" + std::to_string(net->arch.d) + " but the data has Nt=" +
                        std::to_string(data.config.Nt) + ", d=" + std::to_string(data.config.d));
      net = adapt_input_width(*net, data.config.Nt, data.config.d);
    }
    T = net->arch.T;
  }
  const std::size_t baseline_iters = a.baseline.empty() ? T : parse_baseline(a.baseline);

  const std::size_t n = data.samples.size();
  const auto v0 = starting_points(data);
  std::vector<double> deep(n), base(n), ratio(n), deep_ms(n), base_ms(n), lam(n), lam_max(n);
  SolveOptions bopts;
  bopts.max_iters = baseline_iters;
  bopts.tol = 0.0;
  bopts.window = 0;
  bopts.record_surrogate = false;
  parallel_for(n, pick_threads(a.serial, a.threads), [&](std::size_t i) {
    const ChannelSet& ch = data.samples[i];
    auto t0 = Clock::now();
    const UnfoldResult r = net ? unfold_forward(*net, ch, data.config, v0[i], true)
                               : unfold_eigen_stub(T, ch, data.config, v0[i]);
    deep_ms[i] = ms_since(t0);
    deep[i] = r.layer_wsr.empty() ? wsr(ch, data.config, v0[i]) : r.layer_wsr.back();
    t0 = Clock::now();
    const SolveTrace t = fastfp_solve(ch, data.config, v0[i], bopts);
    base_ms[i] = ms_since(t0);
    base[i] = t.final_wsr();
    ratio[i] = deep[i] / base[i];
    double ls = 0.0, lms = 0.0;
    std::size_t lc = 0, lmc = 0;
    for (const auto& layer : r.lambda)
      for (double x : layer) ls += x, ++lc;
    for (const auto& layer : r.lambda_max)
      for (double x : layer) lms += x, ++lmc;
    lam[i] = lc ? ls / static_cast<double>(lc) : 0.0;
    lam_max[i] = lmc ? lms / static_cast<double>(lmc) : 0.0;
  });

  std::vector<double> deep_bits(n), base_bits(n);
  for (std::size_t i = 0; i < n; ++i) {
    deep_bits[i] = deep[i] / kLn2;
    base_bits[i] = base[i] / kLn2;
  }
  json doc;
  doc["manifest"] = manifest_path(a.out).filename().string();
  doc["status"] = "ok";
  doc["model"] = a.stub_eigen ? std::string("stub:eigen") : a.model;
  doc["layers"] = T;
  doc["baseline"] = "fastfp@" + std::to_string(baseline_iters);
  doc["samples"] = n;
  doc["pad_experimental"] = a.pad_experimental;
  const double mean_deep = mean(deep), mean_base = mean(base);
  doc["summary"] = {{"mean_deepfp_wsr_nats", mean_deep},
                    {"mean_deepfp_wsr_bits", mean_deep / kLn2},
                    {"mean_baseline_wsr_nats", mean_base},
                    {"mean_baseline_wsr_bits", mean_base / kLn2},
                    {"ratio_of_means", mean_base != 0.0 ? mean_deep / mean_base : 0.0},
                    {"mean_ratio", mean(ratio)},
                    {"mean_lambda", mean(lam)},
                    {"mean_lambda_max", mean(lam_max)},
                    {"mean_deepfp_ms", mean(deep_ms)},
                    {"mean_baseline_ms", mean(base_ms)}};
  doc["per_sample"] = {{"deepfp_wsr_bits", deep_bits},
                       {"baseline_wsr_bits", base_bits},
                       {"ratio", ratio},
                       {"deepfp_ms", deep_ms},
                       {"baseline_ms", base_ms}};
  doc["distributions"] = {{"deepfp_wsr_bits", distribution_json(deep_bits, a.bins)},
                          {"baseline_wsr_bits", distribution_json(base_bits, a.bins)},
                          {"ratio", distribution_json(ratio, a.bins)}};
  std::ostringstream csv;
  csv << "# manifest: " << manifest_path(a.out).filename().string() << "\n";
  csv << "sample,seed,deepfp_wsr_bits,baseline_wsr_bits,ratio,mean_lambda,mean_lambda_max,deepfp_ms,"
         "baseline_ms\n";
  for (std::size_t i = 0; i < n; ++i)
    csv << i << "," << data.samples[i].seed << "," << fmt(deep_bits[i]) << "," << fmt(base_bits[i])
        << "," << fmt(ratio[i]) << "," << fmt(lam[i]) << "," << fmt(lam_max[i]) << ","
        << fmt(deep_ms[i]) << "," << fmt(base_ms[i]) << "\n";
  write_text_atomic(a.out, doc.dump(2) + "\n");
  write_text_atomic(csv_path(a.out), csv.str());
  m.outputs = {a.out, csv_path(a.out).string()};
  m.write(a.out);
  out << "DeepFP " << fmt(mean_deep / kLn2) << " bits vs fastfp@" << baseline_iters << " "
      << fmt(mean_base / kLn2) << " bits over " << n << " samples\n";
  return kOk;
}

// ---- bench -----------------------------------------------------------------------

struct BenchArgs {
  std::string sweep = "nt=8,16,32,64";
  std::string algo = "fastfp";
  std::string out;
  std::size_t reps = 20;
  std::uint32_t L = 1, K = 1, Nr = 1, d = 1;
  std::uint64_t seed = 1;
  bool serial = false;
};

std::vector<std::uint32_t> parse_sweep(std::string_view s) {
  constexpr std::string_view prefix = "nt=";
  if (s.substr(0, prefix.size()) != prefix)
    throw Error(ErrorKind::InvalidArgument, "sweep must look like nt=8,16,32,64");
  s.remove_prefix(prefix.size());
  std::vector<std::uint32_t> out;
  while (true) {
    const auto comma = s.find(',');
    const std::string_view item = s.substr(0, comma);
    std::uint32_t v = 0;
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size() || item.empty() || v == 0)
      throw Error(ErrorKind::InvalidArgument, "bad sweep entry '" + std::string(item) + "'");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  if (out.size() < 2) throw Error(ErrorKind::InvalidArgument, "sweep needs at least two sizes");
  return out;
}

int cmd_bench(const BenchArgs& a, const std::vector<std::string>& argv, std::ostream& out) {
  Manifest m;
  m.command = "bench";
  m.args = argv;
  const auto nts = parse_sweep(a.sweep);
  BenchOptions o;
  o.L = a.L;
  o.K = a.K;
  o.Nr = a.Nr;
  o.d = a.d;
  o.reps = a.reps;
  o.seed = a.seed;
  for (auto nt : nts)
    if (!(o.d <= o.Nr && o.Nr <= nt)) throw Error(ErrorKind::InvalidArgument, "require d <= Nr <= Nt");
  const BenchAlgo algo = a.algo == "deepfp" ? BenchAlgo::DeepFP : BenchAlgo::FastFP;
  const BenchResult r = run_bench(algo, nts, o);
  json doc = json::parse(to_json(r, o));
  doc["manifest"] = manifest_path(a.out).filename().string();
  write_text_atomic(a.out, doc.dump(2) + "\n");
  m.config = doc["scenario"];
  m.seeds = {{"bench", a.seed}};
  m.outputs = {a.out};
  m.write(a.out);
  out << a.algo << " log-log slope " << fmt(r.slope) << "\n";
  return kOk;
}

}  // namespace

// ---- entry -------------------------------------------------------------------

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weighted sum-rate beamforming: FP, FastFP and unfolded DeepFP"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(BEAMUNFOLD_REVISION));

  GenDataArgs g;
  auto* gen = app.add_subcommand("gen-data", "Generate a channel dataset");
  gen->add_option("config", g.config, "Network config file")->required();
  gen->add_option("--samples", g.samples, "Sample count")->required();
  gen->add_option("--seed", g.seed, "Dataset seed");
  gen->add_option("--out", g.out, "Dataset path")->required();
  gen->add_option("--fading", g.fading)->check(CLI::IsMember({"shadowed", "rayleigh"}));
  gen->add_option("--threads", g.threads);

  SolveArgs s;
  auto* solve = app.add_subcommand("solve", "Run an iterative solver on every sample");
  solve->add_option("--algo", s.algo)->check(CLI::IsMember({"fp", "fastfp", "wmmse-sc"}));
  solve->add_option("--data", s.data)->required();
  solve->add_option("--iters", s.iters);
  solve->add_option("--tol", s.tol)->check(CLI::NonNegativeNumber);
  solve->add_option("--policy", s.policy, "FastFP stepsize")
      ->check(CLI::IsMember({"eigen", "power", "frobenius"}));
  solve->add_option("--out", s.out)->required();
  solve->add_flag("--serial", s.serial, "Single-threaded, for timing");
  solve->add_option("--threads", s.threads);

  TrainArgs t;
  auto* tr = app.add_subcommand("train", "Train the unfolded stepsize network");
  tr->add_option("--data", t.data)->required();
  tr->add_option("--val", t.val);
  tr->add_option("--layers", t.layers)->check(CLI::PositiveNumber);
  tr->add_option("--out", t.out, "Checkpoint path")->required();
  tr->add_option("--epochs", t.epochs);
  tr->add_option("--batch", t.batch);
  tr->add_option("--lr", t.lr);
  tr->add_option("--lr-halving-epochs", t.lr_halving);
  tr->add_option("--stage1-fraction", t.stage1_fraction);
  tr->add_option("--label-iters", t.label_iters);
  tr->add_option("--seed", t.seed);
  tr->add_option("--hidden-width", t.hidden_width)->check(CLI::PositiveNumber);
  tr->add_option("--hidden-layers", t.hidden_layers);
  tr->add_option("--scaling", t.scaling)->check(CLI::IsMember({"trace", "raw"}));
  tr->add_option("--resume", t.resume, "Continue from a checkpoint with training state");
  tr->add_option("--stop-after-epoch", t.stop_after);
  tr->add_option("--log", t.log, "JSON-lines log");
  tr->add_flag("--serial", t.serial);
  tr->add_option("--threads", t.threads);

  EvalArgs e;
  auto* ev = app.add_subcommand("eval", "Compare a trained network against FastFP");
  ev->add_option("--model", e.model);
  ev->add_flag("--stub-eigen", e.stub_eigen, "Eigenvalue stepsize instead of a network");
  ev->add_option("--layers", e.layers, "Layers for --stub-eigen");
  ev->add_option("--data", e.data)->required();
  ev->add_option("--baseline", e.baseline, "fastfp@N (default: N = layers)");
  ev->add_option("--out", e.out)->required();
  ev->add_option("--bins", e.bins)->check(CLI::PositiveNumber);
  ev->add_flag("--pad-experimental", e.pad_experimental,
               "Zero-pad or truncate the input layer to the data width");
  ev->add_flag("--serial", e.serial);
  ev->add_option("--threads", e.threads);

  BenchArgs b;
  auto* be = app.add_subcommand("bench", "Per-iteration cost sweep over Nt");
  be->add_option("--sweep", b.sweep);
  be->add_option("--algo", b.algo)->check(CLI::IsMember({"fastfp", "deepfp"}));
  be->add_option("--out", b.out)->required();
  be->add_option("--reps", b.reps)->check(CLI::PositiveNumber);
  be->add_option("--L", b.L)->check(CLI::Range(1, 7));
  be->add_option("--K", b.K)->check(CLI::PositiveNumber);
  be->add_option("--Nr", b.Nr)->check(CLI::PositiveNumber);
  be->add_option("--d", b.d)->check(CLI::PositiveNumber);
  be->add_option("--seed", b.seed);
  be->add_flag("--serial", b.serial, "Accepted for symmetry; timing always runs on one thread");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_gen_data(g, args, out);
    if (*solve) return cmd_solve(s, args, out, err);
    if (*tr) return cmd_train(t, args, out);
    if (*ev) return cmd_eval(e, args, out);
    if (*be) return cmd_bench(b, args, out);
  } catch (const Error& ex) {
    err << ex.what() << "\n";
    return exit_code_for(ex.kind());
  } catch (const std::exception& ex) {
    err << "internal error: " << ex.what() << "\n";
    return kInternal;
  }
  return kUsage;
}

}  // namespace beamunfold::cli
