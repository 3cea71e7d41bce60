#ifndef STPP_PIPELINE_HPP
#define STPP_PIPELINE_HPP

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stpp/bandwidth.hpp"
#include "stpp/core.hpp"
#include "stpp/homogenize.hpp"
#include "stpp/inference.hpp"
#include "stpp/intensity.hpp"
#include "stpp/io.hpp"
#include "stpp/secondorder.hpp"
#include "stpp/separability.hpp"
#include "stpp/simulate.hpp"
#include "stpp/version.hpp"

namespace stpp {

using Json = nlohmann::ordered_json;

inline const std::vector<std::string>& pipeline_tasks() {
  static const std::vector<std::string> tasks{"intensity", "separability", "ripley-k",
                                              "homogenize", "simulate",     "prop2-check"};
  return tasks;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Parsed pipeline configuration. Every field has a default; JSON keys are
/// documented in the README.
struct PipelineConfig {
  std::string input;
  std::string output_dir = "stpp_out";
  std::uint64_t seed = 1;

  // ingestion
  Projection projection{};
  std::optional<InputWindow> window;
  double time_unit = 1.0;
  DuplicatePolicy duplicates = DuplicatePolicy::reject;

  double subsample = 0.025;

  // grids
  std::size_t nx = 256, ny = 256, nt = 1000;
  std::size_t st_nx = 64, st_ny = 64, st_nt = 250;
  bool write_st = false;

  // bandwidths (selected when absent)
  std::optional<double> bandwidth_space, bandwidth_time;
  std::size_t cv_folds = 10, cv_repeats = 50, cv_candidates = 16;
  double cv_retention = 0.025;
  BandwidthAverage cv_average = BandwidthAverage::arithmetic;

  // tests
  std::size_t replicates = 199;
  double alpha = 0.05;
  std::size_t separability_repeats = 1;
  bool include_undefined = true;

  // K grid
  std::size_t nr = 50, ntau = 50;
  double r_min = 0.0, tau_min = 0.0;
  std::optional<double> r_max, tau_max;
  EdgeCorrection correction = EdgeCorrection::translation;
  double weight_cap = 20.0;

  // simulate / prop2-check models
  std::string model = "poisson";
  double lambda = 1000.0;
  ClusterModel cluster{};
  InputWindow sim_window{0.0, 1.0, 0.0, 1.0, 0.0, 1.0};

  // homogenize
  double target = 500.0;
  std::string planar_model = "input";  // input, cross or sin
  double expected = 50000.0;
  std::optional<double> phi;
  SinVariant sin_variant = SinVariant::half_period;

  // prop2-check
  Prop2Config prop2{};

  Json source = Json::object();

  static PipelineConfig from_json(const Json& j) {
    PipelineConfig c;
    c.source = j;
    auto get = [&](const Json& o, const char* key, auto& dst) {
      if (o.contains(key) && !o.at(key).is_null()) dst = o.at(key).get<std::decay_t<decltype(dst)>>();
    };
    auto get_opt = [&](const Json& o, const char* key, std::optional<double>& dst) {
      if (o.contains(key) && !o.at(key).is_null()) dst = o.at(key).get<double>();
    };
    try {
      get(j, "input", c.input);
      get(j, "output_dir", c.output_dir);
      get(j, "seed", c.seed);
      get(j, "time_unit", c.time_unit);
      get(j, "subsample", c.subsample);
      if (j.contains("duplicates")) {
        const auto d = j.at("duplicates").get<std::string>();
        if (d == "reject") c.duplicates = DuplicatePolicy::reject;
        else if (d == "jitter") c.duplicates = DuplicatePolicy::jitter;
        else throw Error("config: duplicates must be reject or jitter");
      }
      if (j.contains("projection")) {
        const auto& p = j.at("projection");
        if (p.contains("mode")) {
          const auto m = p.at("mode").get<std::string>();
          if (m == "equirectangular") c.projection.mode = ProjectionMode::equirectangular;
          else if (m == "degrees") c.projection.mode = ProjectionMode::degrees;
          else throw Error("config: projection.mode must be equirectangular or degrees");
        }
        get(p, "radius", c.projection.radius);
      }
      if (j.contains("window")) {
        const auto& w = j.at("window");
        InputWindow iw;
        auto pair = [&](std::initializer_list<const char*> keys, double& lo, double& hi) {
          for (const char* k : keys)
            if (w.contains(k)) {
              const auto& a = w.at(k);
              if (!a.is_array() || a.size() != 2) throw Error(std::string("config: window.") + k + " must be [lo, hi]");
              lo = a[0].get<double>();
              hi = a[1].get<double>();
              return;
            }
          throw Error("config: window is missing a coordinate range");
        };
        pair({"lon", "x1"}, iw.lo1, iw.hi1);
        pair({"lat", "x2"}, iw.lo2, iw.hi2);
        if (w.contains("start") || w.contains("end")) {
          auto tp = [&](const char* k) {
            const auto& v = w.at(k);
            const auto t = v.is_number() ? std::optional<double>(v.get<double>()) : parse_time(v.get<std::string>());
            if (!t) throw Error(std::string("config: window.") + k + " is not a valid time");
            return *t;
          };
          iw.t0 = tp("start");
          iw.t1 = tp("end");
        } else {
          pair({"t", "time"}, iw.t0, iw.t1);
        }
        c.window = iw;
      }
      if (j.contains("grid")) {
        const auto& g = j.at("grid");
        get(g, "nx", c.nx);
        get(g, "ny", c.ny);
        get(g, "nt", c.nt);
        if (g.contains("st")) {
          const auto& s = g.at("st");
          if (!s.is_array() || s.size() != 3) throw Error("config: grid.st must be [nx, ny, nt]");
          c.st_nx = s[0].get<std::size_t>();
          c.st_ny = s[1].get<std::size_t>();
          c.st_nt = s[2].get<std::size_t>();
        }
        get(g, "write_st", c.write_st);
      }
      if (j.contains("bandwidth")) {
        const auto& b = j.at("bandwidth");
        get_opt(b, "space", c.bandwidth_space);
        get_opt(b, "time", c.bandwidth_time);
        get(b, "folds", c.cv_folds);
        get(b, "repeats", c.cv_repeats);
        get(b, "candidates", c.cv_candidates);
        get(b, "retention", c.cv_retention);
        if (b.contains("average")) {
          const auto a = b.at("average").get<std::string>();
          if (a == "arithmetic") c.cv_average = BandwidthAverage::arithmetic;
          else if (a == "geometric") c.cv_average = BandwidthAverage::geometric;
          else throw Error("config: bandwidth.average must be arithmetic or geometric");
        }
      }
      if (j.contains("test")) {
        const auto& t = j.at("test");
        get(t, "replicates", c.replicates);
        get(t, "alpha", c.alpha);
        get(t, "repeats", c.separability_repeats);
        get(t, "include_undefined", c.include_undefined);
      }
      if (j.contains("kgrid")) {
        const auto& k = j.at("kgrid");
        get(k, "nr", c.nr);
        get(k, "ntau", c.ntau);
        get(k, "r_min", c.r_min);
        get(k, "tau_min", c.tau_min);
        get_opt(k, "r_max", c.r_max);
        get_opt(k, "tau_max", c.tau_max);
        get(k, "weight_cap", c.weight_cap);
        if (k.contains("correction")) {
          const auto e = k.at("correction").get<std::string>();
          if (e == "translation") c.correction = EdgeCorrection::translation;
          else if (e == "border") c.correction = EdgeCorrection::border;
          else throw Error("config: kgrid.correction must be translation or border");
        }
      }
      if (j.contains("simulate")) {
        const auto& s = j.at("simulate");
        get(s, "model", c.model);
        get(s, "lambda", c.lambda);
        get(s, "kappa", c.cluster.kappa);
        get(s, "mean_offspring", c.cluster.mean_offspring);
        get(s, "sigma", c.cluster.sigma);
        get(s, "sigma_t", c.cluster.sigma_t);
        if (s.contains("window")) {
          const auto& w = s.at("window");
          auto rng = [&](const char* k, double& lo, double& hi) {
            if (w.contains(k)) {
              lo = w.at(k)[0].get<double>();
              hi = w.at(k)[1].get<double>();
            }
          };
          rng("x1", c.sim_window.lo1, c.sim_window.hi1);
          rng("x2", c.sim_window.lo2, c.sim_window.hi2);
          rng("t", c.sim_window.t0, c.sim_window.t1);
        }
      }
      if (j.contains("homogenize")) {
        const auto& h = j.at("homogenize");
        get(h, "target", c.target);
        get(h, "model", c.planar_model);
        get(h, "expected", c.expected);
        get_opt(h, "phi", c.phi);
        if (h.contains("sin_variant")) {
          const auto v = h.at("sin_variant").get<std::string>();
          if (v == "half") c.sin_variant = SinVariant::half_period;
          else if (v == "full") c.sin_variant = SinVariant::full_period;
          else throw Error("config: homogenize.sin_variant must be half or full");
        }
      }
      if (j.contains("prop2")) {
        const auto& p = j.at("prop2");
        get(p, "p", c.prop2.p);
        get(p, "r", c.prop2.r);
        get(p, "tau", c.prop2.tau);
        get(p, "seeds", c.prop2.seeds);
        get(p, "test_per_axis", c.prop2.test_per_axis);
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("config: ") + e.what());
    }
    if (!(c.subsample > 0.0 && c.subsample <= 1.0)) throw Error("config: subsample must lie in (0,1]");
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw Error("config: test.alpha must lie in (0,1)");
    if (c.replicates == 0) throw Error("config: test.replicates must be positive");
    return c;
  }

  static PipelineConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("config: cannot open " + path);
    Json j;
    try {
      j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw Error(std::string("config: ") + e.what());
    }
    return from_json(j);
  }

  Window simulation_window() const {
    return Window(Rect{sim_window.lo1, sim_window.hi1, sim_window.lo2, sim_window.hi2},
                  Interval{sim_window.t0, sim_window.t1});
  }
};

struct RunOptions {
  bool force = false;
  bool skip_bad = false;
};

namespace detail {

inline Json json_number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json envelope_json(const EnvelopeResult& e) {
  Json j;
  j["p_value"] = e.p_value;
  j["replicates"] = e.replicates;
  j["alpha"] = e.alpha;
  j["rejected"] = e.rejected();
  std::size_t out = 0;
  for (bool b : e.outside) out += b ? 1 : 0;
  j["points_outside_envelope"] = out;
  j["warnings"] = e.warnings;
  return j;
}

/// arg,observed,lo,hi rows for component [from, to) of an envelope.
inline void write_curve_csv(const std::filesystem::path& path, const EnvelopeResult& e, std::size_t from,
                            std::size_t to) {
  std::ofstream out(path);
  out << "arg,observed,lo,hi\n";
  for (std::size_t k = from; k < to; ++k)
    out << format_double(e.args[k]) << ',' << format_double(e.observed[k]) << ',' << format_double(e.lower[k]) << ','
        << format_double(e.upper[k]) << '\n';
}

class Runner {
 public:
  Runner(const PipelineConfig& cfg, const RunOptions& opts) : cfg_(cfg), opts_(opts), dir_(cfg.output_dir) {}

  void run(const std::string& task) {
    const auto& tasks = pipeline_tasks();
    if (std::find(tasks.begin(), tasks.end(), task) == tasks.end()) throw Error("unknown task: " + task);
    prepare_dir();
    report_["task"] = task;
    report_["seed"] = cfg_.seed;
    if (task == "intensity") intensity();
    else if (task == "separability") separability();
    else if (task == "ripley-k") ripley_k();
    else if (task == "homogenize") homogenize_task();
    else if (task == "simulate") simulate_task();
    else prop2_task();
    report_["warnings"] = warnings_;
    write_text("report.json", report_.dump(2) + "\n");
    Json m;
    m["version"] = version;
    m["task"] = task;
    m["config_hash"] = hex64(fnv1a64(cfg_.source.dump()));
    m["config"] = cfg_.source;
    m["seed"] = cfg_.seed;
    m["timestamp"] = utc_now();
    write_text("manifest.json", m.dump(2) + "\n");
  }

 private:
  static std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
  }

  void prepare_dir() {
    namespace fs = std::filesystem;
    if (fs::exists(dir_)) {
      if (!fs::is_directory(dir_)) throw Error("output path exists and is not a directory: " + dir_.string());
      if (!fs::is_empty(dir_) && !opts_.force)
        throw Error("output directory " + dir_.string() + " is not empty (use --force to overwrite)");
    } else {
      fs::create_directories(dir_);
    }
  }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream out(dir_ / name);
    if (!out) throw Error("cannot write " + (dir_ / name).string());
    out << text;
  }

  void write_field(const std::string& name, const ScalarField& f) {
    std::ofstream out(dir_ / name);
    write_field_csv(out, f);
  }

  void note(const std::vector<std::string>& w, const std::string& prefix) {
    for (const auto& s : w) warnings_.push_back(prefix + s);
  }

  SpaceTimePattern load() {
    if (cfg_.input.empty()) throw Error("config: input path is required for this task");
    IngestOptions io;
    io.projection = cfg_.projection;
    io.window = cfg_.window;
    io.time_unit = cfg_.time_unit;
    io.skip_bad = opts_.skip_bad;
    io.duplicates = cfg_.duplicates;
    io.jitter_seed = cfg_.seed;
    auto r = ingest(cfg_.input, io);
    note(r.warnings, "ingest: ");
    report_["input"] = {{"events", r.pattern.size()}, {"skipped_rows", r.skipped}, {"geographic", r.geographic}};
    const auto& w = r.pattern.window();
    report_["window"] = {{"x1", {w.rect().lo1, w.rect().hi1}},
                         {"x2", {w.rect().lo2, w.rect().hi2}},
                         {"t", {w.time().lo, w.time().hi}}};
    return std::move(r.pattern);
  }

  SpaceTimePattern subsample(const SpaceTimePattern& x, std::uint64_t index) {
    if (cfg_.subsample >= 1.0) return x;
    return thin(x, ConstantRetention{cfg_.subsample}, replicate_seed(cfg_.seed, 1000 + index));
  }

  double space_bandwidth(const SpatialPattern& sp) {
    if (cfg_.bandwidth_space) return *cfg_.bandwidth_space;
    BandwidthSearch s;
    s.candidates = BandwidthSearch::default_candidates(sp.window, cfg_.cv_candidates);
    s.folds = cfg_.cv_folds;
    s.repeats = cfg_.cv_repeats;
    s.retention = cfg_.cv_retention;
    s.seed = replicate_seed(cfg_.seed, 2);
    s.average = cfg_.cv_average;
    auto sel = select_bandwidth_spatial(sp, s);
    note(sel.warnings, "bandwidth: ");
    return sel.bandwidth;
  }

  double time_bandwidth(const TemporalPattern& tp) {
    if (cfg_.bandwidth_time) return *cfg_.bandwidth_time;
    return select_bandwidth_temporal(tp);
  }

  void intensity() {
    const auto x = load();
    auto [sp, tp] = project(x);
    const double bs = space_bandwidth(sp), bt = time_bandwidth(tp);
    const auto ls = estimate_lambda_s(sp, KernelSpec{bs}, spatial_grid(x.window(), cfg_.nx, cfg_.ny));
    const auto lt = estimate_lambda_t(tp, KernelSpec{bt}, temporal_grid(x.window(), cfg_.nt));
    note(ls.warnings, "lambda_s: ");
    note(lt.warnings, "lambda_t: ");
    write_field("intensity_s.csv", ls.field);
    write_field("intensity_t.csv", lt.field);
    Json j = {{"bandwidth_space", bs}, {"bandwidth_time", bt},
              {"integral_s", ls.field.integrate()}, {"integral_t", lt.field.integrate()}};
    if (cfg_.write_st) {
      const auto lst = estimate_lambda_st(x, KernelSpec{bs}, KernelSpec{bt},
                                          spacetime_grid(x.window(), cfg_.st_nx, cfg_.st_ny, cfg_.st_nt));
      write_field("intensity_st.csv", lst.field);
      j["integral_st"] = lst.field.integrate();
    }
    report_["intensity"] = j;
  }

  void separability() {
    const auto x = load();
    Json runs = Json::array();
    for (std::size_t r = 0; r < cfg_.separability_repeats; ++r) {
      const auto xs = subsample(x, r);
      if (xs.size() < 2) throw Error("separability: subsample has fewer than 2 events");
      auto [sp, tp] = project(xs);
      SeparabilityTestConfig tc;
      tc.space = KernelSpec{space_bandwidth(sp)};
      tc.time = KernelSpec{time_bandwidth(tp)};
      tc.nx = cfg_.st_nx;
      tc.ny = cfg_.st_ny;
      tc.nt = cfg_.st_nt;
      tc.replicates = cfg_.replicates;
      tc.alpha = cfg_.alpha;
      tc.seed = replicate_seed(cfg_.seed, 3000 + r);
      tc.options.include_undefined = cfg_.include_undefined;
      const auto res = separability_test(xs, tc);
      const std::string suffix = cfg_.separability_repeats > 1 ? "_r" + std::to_string(r + 1) : "";
      const auto& e = res.envelope;
      const std::size_t split = e.component_offsets.at(1);
      write_curve_csv(dir_ / ("curves_St" + suffix + ".csv"), e, 0, split);
      {
        std::ofstream out(dir_ / ("curves_Ss" + suffix + ".csv"));
        out << "x1,x2,observed,lo,hi\n";
        const std::size_t nx = res.spatial.nx();
        for (std::size_t k = split; k < e.args.size(); ++k) {
          const auto cell = static_cast<std::size_t>(e.args[k]);
          out << format_double(res.spatial.x1.center(cell % nx)) << ','
              << format_double(res.spatial.x2.center(cell / nx)) << ',' << format_double(e.observed[k]) << ','
              << format_double(e.lower[k]) << ',' << format_double(e.upper[k]) << '\n';
        }
      }
      Json j = envelope_json(e);
      j["events"] = xs.size();
      j["bandwidth_space"] = tc.space.bandwidth;
      j["bandwidth_time"] = tc.time.bandwidth;
      j["seed"] = tc.seed;
      runs.push_back(j);
    }
    report_["subsample"] = cfg_.subsample;
    report_["separability"] = runs;
  }

  void ripley_k() {
    const auto x = load();
    const auto xs = subsample(x, 0);
    if (xs.size() < 2) throw Error("ripley-k: subsample has fewer than 2 events");
    auto [sp, tp] = project(xs);
    const double bs = space_bandwidth(sp), bt = time_bandwidth(tp);
    const auto lst = estimate_lambda_st(xs, KernelSpec{bs}, KernelSpec{bt},
                                        spacetime_grid(xs.window(), cfg_.st_nx, cfg_.st_ny, cfg_.st_nt));
    note(lst.warnings, "lambda_st: ");
    const KGrid grid = KGrid::make(xs.window(), cfg_.nr, cfg_.ntau, cfg_.r_min, cfg_.r_max, cfg_.tau_min, cfg_.tau_max);
    const KOptions ko{cfg_.correction, cfg_.weight_cap, 0.01};
    const auto observed = estimate_K(xs, lst, grid, ko);
    note(observed.warnings, "K: ");
    const auto obs_avg = average_K(observed);

    const IntensityModel fitted = GriddedIntensity{lst.field};
    CurveSet kt{obs_avg.tau, obs_avg.K_t, std::vector<std::vector<double>>(cfg_.replicates)};
    CurveSet ks{obs_avg.r, obs_avg.K_s, std::vector<std::vector<double>>(cfg_.replicates)};
    std::vector<std::size_t> wins(cfg_.replicates, 0);
    parallel_for(cfg_.replicates, [&](std::size_t b) {
      const auto sim = simulate_poisson(fitted, xs.window(), replicate_seed(cfg_.seed, 5000 + b));
      const auto est = estimate_K(sim, lst, grid, ko);
      const auto avg = average_K(est);
      kt.replicates[b] = avg.K_t;
      ks.replicates[b] = avg.K_s;
      wins[b] = est.winsorized;
    });
    const auto env = combined_erl_test({kt, ks}, cfg_.alpha);
    const std::size_t split = env.component_offsets.at(1);
    write_curve_csv(dir_ / "curves_Kt.csv", env, 0, split);
    write_curve_csv(dir_ / "curves_Ks.csv", env, split, env.args.size());
    {
      std::ofstream out(dir_ / "K_surface.csv");
      out << "r,tau,K\n";
      for (std::size_t ir = 0; ir < grid.nr(); ++ir)
        for (std::size_t it = 0; it < grid.ntau(); ++it)
          out << format_double(grid.r[ir]) << ',' << format_double(grid.tau[it]) << ','
              << format_double(observed(ir, it)) << '\n';
    }
    Json j = envelope_json(env);
    std::size_t rep_w = 0;
    for (auto w : wins) rep_w += w;
    j["events"] = xs.size();
    j["bandwidth_space"] = bs;
    j["bandwidth_time"] = bt;
    j["r_max"] = grid.r.back();
    j["tau_max"] = grid.tau.back();
    j["correction"] = cfg_.correction == EdgeCorrection::translation ? "translation" : "border";
    j["winsorized_pairs_observed"] = observed.winsorized;
    j["winsorized_pairs_replicates"] = rep_w;
    j["floored_points"] = observed.floored;
    j["intensity_floor"] = observed.intensity_floor;
    report_["subsample"] = cfg_.subsample;
    report_["ripley_k"] = j;
  }

  void homogenize_task() {
    SpatialPattern input;
    Json j;
    if (cfg_.planar_model == "input") {
      input = project(load()).first;
    } else {
      PlanarModel m;
      if (cfg_.planar_model == "cross") m = cross_model(cfg_.expected, cfg_.phi.value_or(0.02));
      else if (cfg_.planar_model == "sin") m = sin_model(cfg_.expected, cfg_.phi.value_or(0.2), cfg_.sin_variant);
      else throw Error("config: homogenize.model must be input, cross or sin");
      input = simulate_planar(m, replicate_seed(cfg_.seed, 6000));
      j["model"] = cfg_.planar_model;
      j["beta"] = m.beta;
      std::ofstream out(dir_ / "pattern_input.csv");
      write_pattern_csv(out, input);
    }
    HomogenizeConfig hc;
    hc.target = cfg_.target;
    hc.seed = replicate_seed(cfg_.seed, 6001);
    const auto raw = quadrat_test(input);
    const auto res = homogenize(input, hc);
    note(res.report.warnings, "homogenize: ");
    {
      std::ofstream out(dir_ / "pattern_homogenized.csv");
      write_pattern_csv(out, res.pattern);
    }
    const auto& r = res.report;
    j["input_events"] = r.input_count;
    j["target"] = cfg_.target;
    j["mu"] = r.mu;
    j["loss"] = r.loss;
    j["level_set_area"] = r.level_area;
    j["level_set_cells"] = r.level_cells;
    j["retained"] = r.retained;
    j["expected_retained"] = r.expected_retained;
    j["quadrat_statistic"] = r.quadrat.statistic;
    j["quadrat_p_value"] = r.quadrat.p_value;
    j["quadrat_tiles"] = {r.quadrat.nx, r.quadrat.ny};
    j["raw_quadrat_statistic"] = raw.statistic;
    j["raw_quadrat_p_value"] = raw.p_value;
    report_["homogenize"] = j;
  }

  void simulate_task() {
    const Window w = cfg_.simulation_window();
    SpaceTimePattern x;
    Json j;
    if (cfg_.model == "poisson") {
      x = simulate_poisson(ConstantIntensity{cfg_.lambda}, w, cfg_.seed);
      j["lambda"] = cfg_.lambda;
    } else if (cfg_.model == "cluster") {
      x = simulate_cluster(cfg_.cluster, w, cfg_.seed);
      j["kappa"] = cfg_.cluster.kappa;
      j["mean_offspring"] = cfg_.cluster.mean_offspring;
      j["sigma"] = cfg_.cluster.sigma;
      j["sigma_t"] = cfg_.cluster.sigma_t;
    } else {
      throw Error("config: simulate.model must be poisson or cluster");
    }
    std::ofstream out(dir_ / "pattern.csv");
    write_pattern_csv(out, x);
    j["model"] = cfg_.model;
    j["events"] = x.size();
    report_["simulate"] = j;
  }

  void prop2_task() {
    const Window w = cfg_.simulation_window();
    Prop2Config pc = cfg_.prop2;
    pc.seed = cfg_.seed;
    ReferenceModel model = cfg_.cluster;
    if (cfg_.model == "poisson") model = IntensityModel{ConstantIntensity{cfg_.lambda}};
    else if (cfg_.model != "cluster") throw Error("config: simulate.model must be poisson or cluster");
    const auto res = prop2_residual_check(model, w, pc);
    const double lam_bar = res.lambda_bar;
    const auto series = prop2_poisson_series(SeriesDiagnostics{lam_bar, pc.p, 30, {}, {}}, pc.r, pc.tau);
    Json j;
    j["model"] = cfg_.model;
    j["p"] = pc.p;
    j["r"] = pc.r;
    j["tau"] = pc.tau;
    j["seeds"] = pc.seeds;
    j["lambda_bar"] = lam_bar;
    j["ball_volume"] = res.ball;
    j["K_hat"] = res.K_hat;
    j["J_p"] = res.J_p;
    j["J_half"] = res.J_half;
    j["residual_p"] = res.residual_p;
    j["residual_half"] = res.residual_half;
    j["residual_ratio"] = json_number(res.ratio);
    j["min_retained"] = res.min_retained;
    j["poisson_series_one_minus_F"] = series.one_minus_F;
    report_["prop2"] = j;
  }

  const PipelineConfig& cfg_;
  RunOptions opts_;
  std::filesystem::path dir_;
  Json report_ = Json::object();
  std::vector<std::string> warnings_;
};

}  // namespace detail

/// Runs one task and writes its artifacts into cfg.output_dir.
inline void run_pipeline(const PipelineConfig& cfg, const std::string& task, const RunOptions& opts = {}) {
  detail::Runner(cfg, opts).run(task);
}

}  // namespace stpp

#endif  // STPP_PIPELINE_HPP
