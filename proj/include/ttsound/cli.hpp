#pragma once

// Command-line front end. Subcommands: detect, featurize, train, eval, run,
// mix, grid-search. Settings merge as defaults <- --config file <- flags; the
// effective configuration goes to the error stream and, when there is an
// output path, to "<out>.config".
//
// Exit codes: 0 success, 2 usage/input error, 3 data/format error,
// 4 numeric failure, 1 unexpected internal error.

#include "audio_io.hpp"
#include "classify.hpp"
#include "config.hpp"
#include "detect.hpp"
#include "error.hpp"
#include "eval.hpp"
#include "features.hpp"
#include "filter.hpp"
#include "model_io.hpp"
#include "synth.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace ttsound::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitInput = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

inline int exit_code(ErrorKind k)
{
  switch (k)
  {
    case ErrorKind::Input: return kExitInput;
    case ErrorKind::Data: return kExitData;
    case ErrorKind::Numeric: return kExitNumeric;
  }
  return kExitInternal;
}

// ---------------------------------------------------------------------------
// Configuration

namespace detail {

inline std::string num(double v)
{
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

inline std::string join(const std::vector<double>& v)
{
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + num(v[i]);
  return s;
}

inline std::string join(const std::vector<std::size_t>& v)
{
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::vector<double> parse_doubles(const std::string& key, const std::string& text)
{
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ','))
  {
    KeyValues kv;
    kv.set(key, ttsound::detail::trim(item));
    double v = 0.0;
    kv.get(key, v);
    out.push_back(v);
  }
  if (out.empty()) throw ParameterError("'" + key + "' needs at least one value");
  return out;
}

} // namespace detail

struct CliConfig
{
  std::uint64_t seed{0};
  DetectorConfig detector;
  FilterSpec filter;
  StftSpec stft;
  double preOnsetMs{1.0};
  Task task{Task::Surface};
  ModelKind method{ModelKind::Cnn};
  TrainConfig train;
  double testFraction{0.2};
  CnnArchitecture arch;
  SvmConfig svm;
  GmmConfig gmm;
  double snrDb{10.0};
  std::vector<double> gammas{0.98, 0.99, 0.995, 0.998, 0.999};
  std::vector<double> multipliers{4.0, 6.0, 8.0, 12.0, 16.0};
  std::size_t fixtures{50};
  int clicks{3};

  static const std::set<std::string>& keys()
  {
    static const std::set<std::string> k = [] {
      std::set<std::string> s = detector_config_keys();
      s.insert({"seed", "stft.n_fft", "stft.hop", "window.pre_onset_ms", "task", "method", "train.epochs",
                "train.batch_size", "train.learning_rate", "train.patience", "train.bn_momentum",
                "train.test_fraction", "cnn.channels", "cnn.pool", "svm.lambda", "svm.epochs",
                "gmm.components", "gmm.max_iterations", "gmm.tolerance", "gmm.variance_floor",
                "noise.snr_db", "grid.gammas", "grid.multipliers", "grid.fixtures", "grid.clicks"});
      return s;
    }();
    return k;
  }

  void apply(const KeyValues& kv)
  {
    kv.require_known(keys());
    kv.get("seed", seed);
    apply_detector_config(kv, detector, filter);
    kv.get("stft.n_fft", stft.nFft);
    kv.get("stft.hop", stft.hop);
    kv.get("window.pre_onset_ms", preOnsetMs);
    std::string s;
    if (kv.get("task", s)) set_task(s);
    if (kv.get("method", s)) set_method(s);
    kv.get("train.epochs", train.epochs);
    kv.get("train.batch_size", train.batchSize);
    kv.get("train.learning_rate", train.learningRate);
    kv.get("train.patience", train.patience);
    kv.get("train.bn_momentum", train.bnMomentum);
    kv.get("train.test_fraction", testFraction);
    if (kv.has("cnn.channels") || kv.has("cnn.pool"))
    {
      std::string channels = detail::join(arch.channels), pool = detail::join(arch.poolAfter);
      kv.get("cnn.channels", channels);
      kv.get("cnn.pool", pool);
      try
      {
        arch = CnnArchitecture::parse("input=64x7;channels=" + channels + ";pool=" + pool + ";classes=2");
      }
      catch (const FormatError& e)
      {
        throw ParameterError(std::string("cnn.channels/cnn.pool: ") + e.what());
      }
    }
    kv.get("svm.lambda", svm.lambda);
    kv.get("svm.epochs", svm.epochs);
    kv.get("gmm.components", gmm.components);
    kv.get("gmm.max_iterations", gmm.maxIterations);
    kv.get("gmm.tolerance", gmm.tolerance);
    kv.get("gmm.variance_floor", gmm.varianceFloor);
    kv.get("noise.snr_db", snrDb);
    if (kv.get("grid.gammas", s)) gammas = detail::parse_doubles("grid.gammas", s);
    if (kv.get("grid.multipliers", s)) multipliers = detail::parse_doubles("grid.multipliers", s);
    kv.get("grid.fixtures", fixtures);
    kv.get("grid.clicks", clicks);
  }

  void set_task(const std::string& s)
  {
    auto t = parse_task(s);
    if (!t) throw ParameterError("unknown task '" + s + "' (expected surface or spin)");
    task = *t;
  }

  void set_method(const std::string& s)
  {
    auto m = parse_method(s);
    if (!m) throw ParameterError("unknown method '" + s + "' (expected cnn, svm or gmm)");
    method = *m;
  }

  /// Every setting as "key = value" lines, sorted by key.
  std::string to_text() const
  {
    using detail::num;
    std::map<std::string, std::string> m{
        {"seed", std::to_string(seed)},
        {"frame_ms", num(detector.frameMs)},
        {"gamma", num(detector.gamma)},
        {"threshold_multiplier", num(detector.thresholdMultiplier)},
        {"refractory_ms", num(detector.refractoryMs)},
        {"ema_floor", num(detector.emaFloor)},
        {"onset_calibration", num(detector.onsetCalibration)},
        {"filter.order", std::to_string(filter.order)},
        {"filter.cutoff_hz", num(filter.cutoffHz)},
        {"stft.n_fft", std::to_string(stft.nFft)},
        {"stft.hop", std::to_string(stft.hop)},
        {"window.pre_onset_ms", num(preOnsetMs)},
        {"task", std::string(to_string(task))},
        {"method", std::string(to_string(method))},
        {"train.epochs", std::to_string(train.epochs)},
        {"train.batch_size", std::to_string(train.batchSize)},
        {"train.learning_rate", num(train.learningRate)},
        {"train.patience", std::to_string(train.patience)},
        {"train.bn_momentum", num(train.bnMomentum)},
        {"train.test_fraction", num(testFraction)},
        {"cnn.channels", detail::join(arch.channels)},
        {"cnn.pool", detail::join(arch.poolAfter)},
        {"svm.lambda", num(svm.lambda)},
        {"svm.epochs", std::to_string(svm.epochs)},
        {"gmm.components", std::to_string(gmm.components)},
        {"gmm.max_iterations", std::to_string(gmm.maxIterations)},
        {"gmm.tolerance", num(gmm.tolerance)},
        {"gmm.variance_floor", num(gmm.varianceFloor)},
        {"noise.snr_db", num(snrDb)},
        {"grid.gammas", detail::join(gammas)},
        {"grid.multipliers", detail::join(multipliers)},
        {"grid.fixtures", std::to_string(fixtures)},
        {"grid.clicks", std::to_string(clicks)},
    };
    std::string out;
    for (const auto& [k, v] : m) out += k + " = " + v + "\n";
    return out;
  }
};

// ---------------------------------------------------------------------------
// Flags

struct Flags
{
  std::string config;
  std::uint64_t seed{0};
  double gamma{0.0}, thresholdMultiplier{0.0}, refractoryMs{0.0}, cutoffHz{0.0}, snrDb{0.0};
  std::size_t fixtures{0};
  std::string gammas, multipliers;
  std::string task, method, out;
  std::multimap<std::string, CLI::Option*> given; // one entry per subcommand using the flag

  bool has(const std::string& name) const
  {
    auto [lo, hi] = given.equal_range(name);
    for (auto it = lo; it != hi; ++it)
      if (it->second->count() > 0) return true;
    return false;
  }
};

namespace detail {

inline void add_config(CLI::App* sub, Flags& f)
{
  f.given.emplace("config", sub->add_option("--config", f.config, "flat key=value configuration file"));
}

inline void add_seed(CLI::App* sub, Flags& f)
{
  f.given.emplace("seed", sub->add_option("--seed", f.seed, "seed for every random choice"));
}

inline void add_out(CLI::App* sub, Flags& f, const std::string& what, bool required = false)
{
  auto* o = sub->add_option("--out", f.out, what);
  if (required) o->required();
  f.given.emplace("out", o);
}

inline void add_detector(CLI::App* sub, Flags& f)
{
  f.given.emplace("gamma", sub->add_option("--gamma", f.gamma, "EMA decay per frame, in (0, 1)"));
  f.given.emplace("threshold-multiplier", sub->add_option("--threshold-multiplier", f.thresholdMultiplier, "trigger when energy exceeds this times the EMA"));
  f.given.emplace("refractory-ms", sub->add_option("--refractory-ms", f.refractoryMs, "lockout after a detection"));
  f.given.emplace("cutoff-hz", sub->add_option("--cutoff-hz", f.cutoffHz, "high-pass cutoff"));
}

inline void add_snr(CLI::App* sub, Flags& f, const std::string& what)
{
  f.given.emplace("snr-db", sub->add_option("--snr-db", f.snrDb, what));
}

inline void add_task(CLI::App* sub, Flags& f)
{
  f.given.emplace("task", sub->add_option("--task", f.task, "surface or spin"));
}

inline void add_method(CLI::App* sub, Flags& f)
{
  f.given.emplace("method", sub->add_option("--method", f.method, "cnn, svm or gmm"));
}

inline std::string with_suffix(const std::string& path, const std::string& suffix) { return path + suffix; }

} // namespace detail

/// defaults <- config file <- flags
inline CliConfig effective_config(const Flags& f)
{
  CliConfig c;
  if (f.has("config")) c.apply(KeyValues::load(f.config));
  if (f.has("seed")) c.seed = f.seed;
  if (f.has("gamma")) c.detector.gamma = f.gamma;
  if (f.has("threshold-multiplier")) c.detector.thresholdMultiplier = f.thresholdMultiplier;
  if (f.has("refractory-ms")) c.detector.refractoryMs = f.refractoryMs;
  if (f.has("cutoff-hz")) c.filter.cutoffHz = f.cutoffHz;
  if (f.has("snr-db")) c.snrDb = f.snrDb;
  if (f.has("fixtures")) c.fixtures = f.fixtures;
  if (f.has("gammas")) c.gammas = detail::parse_doubles("--gammas", f.gammas);
  if (f.has("multipliers")) c.multipliers = detail::parse_doubles("--multipliers", f.multipliers);
  if (f.has("task")) c.set_task(f.task);
  if (f.has("method")) c.set_method(f.method);
  return c;
}

// ---------------------------------------------------------------------------
// Commands

struct Context
{
  std::ostream& out;
  std::ostream& err;
  const Flags& flags;
  CliConfig config;

  /// Prints the effective configuration and saves it beside the output.
  void announce()
  {
    const auto text = config.to_text();
    err << "# effective config\n";
    std::istringstream lines(text);
    for (std::string l; std::getline(lines, l);) err << "#   " << l << '\n';
    if (!flags.out.empty()) write_file(flags.out + ".config", text);
  }

  /// Writes to --out when given, otherwise to the output stream.
  void emit(const std::string& text)
  {
    if (flags.out.empty()) out << text;
    else write_file(flags.out, text);
  }
};

inline int cmd_detect(Context& ctx, const std::string& audio)
{
  ctx.announce();
  const auto clip = load_wav(audio);
  ctx.config.filter.sampleRate = clip.sample_rate();
  const auto events = detect_bounces(clip, ctx.config.detector, ctx.config.filter);
  ctx.emit(events_csv(events));
  ctx.err << "# " << events.size() << " event(s)\n";
  return kExitOk;
}

inline std::vector<FeatureRecord> featurize_manifest(const DatasetManifest& manifest, const CliConfig& c)
{
  MelExtractor ex(c.stft);
  std::map<std::filesystem::path, AudioClip> clips;
  std::vector<FeatureRecord> records;
  for (const auto& e : manifest.entries)
  {
    auto it = clips.find(e.path);
    if (it == clips.end()) it = clips.emplace(e.path, load_wav(e.path)).first;
    const auto& clip = it->second;
    const auto onset = static_cast<std::size_t>(std::llround(e.onsetMs * clip.sample_rate() / 1000.0));
    FeatureRecord r;
    r.surface = static_cast<std::int8_t>(id(e.surface));
    r.spin = static_cast<std::int8_t>(e.spin ? id(*e.spin) : -1);
    r.logMel = ex.log_mel(extract_window(clip, onset, kWindowLength, c.preOnsetMs));
    records.push_back(std::move(r));
  }
  return records;
}

inline int cmd_featurize(Context& ctx, const std::string& manifestPath)
{
  ctx.announce();
  const auto manifest = load_manifest(manifestPath);
  const auto records = featurize_manifest(manifest, ctx.config);
  write_features(ctx.flags.out, records);
  ctx.out << "wrote " << records.size() << " record(s) to " << ctx.flags.out << '\n';
  return kExitOk;
}

inline int cmd_train(Context& ctx, const std::string& featuresPath)
{
  ctx.announce();
  const auto records = read_features(featuresPath);
  const auto& c = ctx.config;
  TrainOptions opt;
  opt.method = c.method;
  opt.task = c.task;
  opt.seed = c.seed;
  opt.testFraction = c.testFraction;
  opt.cnn = c.train;
  opt.arch = c.arch;
  opt.svm = c.svm;
  opt.gmm = c.gmm;
  const auto result = train_classifier(records, opt);
  save_model(result.model, ctx.flags.out);

  std::string log;
  switch (c.method)
  {
    case ModelKind::Cnn: log = train_log_csv(result.log); break;
    case ModelKind::Svm: log = "class,note\n"; break;
    case ModelKind::Gmm:
    {
      std::ostringstream o;
      o.precision(17);
      o << "class,iteration,mean_log_likelihood\n";
      for (std::size_t k = 0; k < result.emHistories.size(); ++k)
        for (std::size_t i = 0; i < result.emHistories[k].size(); ++i)
          o << result.model.classes.name(k) << ',' << i + 1 << ',' << result.emHistories[k][i] << '\n';
      log = o.str();
      break;
    }
  }
  if (c.method == ModelKind::Svm)
  {
    std::ostringstream o;
    o << "class,weight_norm,bias\n";
    o.precision(17);
    const auto& svm = std::get<SvmModel>(result.model.model);
    for (std::size_t k = 0; k < svm.num_classes(); ++k)
    {
      double n = 0.0;
      for (double w : svm.weights[k]) n += w * w;
      o << result.model.classes.name(k) << ',' << std::sqrt(n) << ',' << svm.bias[k] << '\n';
    }
    log = o.str();
  }
  write_file(ctx.flags.out + ".log.csv", log);

  ctx.out << "trained " << to_string(c.method) << " for task " << to_string(c.task) << " on "
          << result.split.train.size() << " record(s), " << result.split.test.size() << " held out\n";
  if (!result.split.test.empty())
  {
    const auto s = score_classifier(result.model, records, result.split.test);
    ctx.out << "held-out accuracy " << ttsound::detail::fmt(s.accuracy, 4) << ", macro-F1 "
            << ttsound::detail::fmt(s.macroF1, 4) << '\n';
  }
  ctx.out << "model written to " << ctx.flags.out << '\n';
  return kExitOk;
}

inline int cmd_eval(Context& ctx, const std::string& modelPath, const std::string& featuresPath)
{
  ctx.announce();
  const auto model = load_model(modelPath);
  const auto records = read_features(featuresPath);
  std::vector<std::size_t> indices;
  std::ostringstream report;
  const auto fp = model.meta.find("data_fnv1a");
  if (fp != model.meta.end() && fp->second == fingerprint(records))
  {
    std::uint64_t seed = 0;
    double fraction = 0.2;
    KeyValues kv;
    for (const auto& [k, v] : model.meta) kv.set(k, v);
    kv.get("seed", seed);
    kv.get("test_fraction", fraction);
    indices = stratified_split(records, model.classes.task, seed, fraction).test;
    report << "WARNING: this is the model's own training file. Only the held-out split (seed " << seed
           << ", test fraction " << ttsound::detail::fmt(fraction, 2) << ", " << indices.size()
           << " records) is scored.\n\n";
  }
  else
  {
    indices = eligible_indices(records, model.classes.task);
  }
  const auto s = score_classifier(model, records, indices);
  report << to_string(model.kind) << " " << to_string(model.classes.task) << " classifier, " << s.total
         << " test record(s)\n"
         << classification_report(s);
  ctx.out << report.str();
  if (ctx.flags.out.empty())
  {
    ctx.out << '\n' << confusion_csv(s);
  }
  else
  {
    write_file(ctx.flags.out, report.str());
    write_file(ctx.flags.out + ".confusion.csv", confusion_csv(s));
    write_file(ctx.flags.out + ".scores.csv", classification_csv(s));
  }
  return kExitOk;
}

inline int cmd_run(Context& ctx, const std::string& audio, const std::string& surfacePath,
                   const std::string& spinPath)
{
  ctx.announce();
  const auto surface = load_model(surfacePath);
  std::optional<ClassifierModel> spin;
  if (!spinPath.empty()) spin = load_model(spinPath);
  const auto clip = load_wav(audio);
  const auto events = end_to_end(clip, ctx.config.detector, ctx.config.filter, surface, spin ? &*spin : nullptr);
  ctx.emit(annotated_csv(events));
  ctx.err << "# " << events.size() << " event(s)\n";
  return kExitOk;
}

inline int cmd_mix(Context& ctx, const std::string& signalPath, const std::string& noisePath)
{
  ctx.announce();
  const auto mix = mix_noise(load_wav(signalPath), load_wav(noisePath), ctx.config.snrDb);
  write_wav(ctx.flags.out, mix.clip);
  ctx.out << "noise gain " << ttsound::detail::fmt(mix.noiseGain, 9) << ", rescale "
          << ttsound::detail::fmt(mix.rescale, 9) << ", wrote " << ctx.flags.out << '\n';
  return kExitOk;
}

/// Recordings and their annotated onsets, one fixture per file.
inline std::vector<synth::Fixture> fixtures_from_manifest(const DatasetManifest& manifest)
{
  std::map<std::filesystem::path, std::vector<std::size_t>> onsets;
  for (const auto& e : manifest.entries)
    onsets[e.path].push_back(static_cast<std::size_t>(std::llround(e.onsetMs * kDatasetSampleRate / 1000.0)));
  std::vector<synth::Fixture> out;
  for (auto& [path, o] : onsets)
  {
    std::sort(o.begin(), o.end());
    out.push_back({load_wav(path), o});
  }
  return out;
}

inline int cmd_grid_search(Context& ctx, const std::string& manifestPath)
{
  ctx.announce();
  const auto& c = ctx.config;
  std::vector<synth::Fixture> fx;
  if (manifestPath.empty())
  {
    synth::FixtureOptions opt;
    opt.clicks = c.clicks;
    fx = synth::click_fixtures(c.fixtures, c.seed, opt);
  }
  else
  {
    fx = fixtures_from_manifest(load_manifest(manifestPath));
  }
  std::optional<NoiseOverlay> noise;
  if (ctx.flags.has("snr-db"))
  {
    std::size_t longest = 1;
    for (const auto& f : fx) longest = std::max(longest, f.clip.size());
    noise = NoiseOverlay{synth::speech_noise(longest, c.seed + 1), c.snrDb};
  }
  const auto r = grid_search_detector(fx, c.gammas, c.multipliers, c.detector, c.filter, noise);
  ctx.emit(grid_csv(r));
  ctx.err << "# best: gamma = " << detail::num(r.bestConfig.gamma)
          << ", threshold_multiplier = " << detail::num(r.bestConfig.thresholdMultiplier) << '\n'
          << detection_report(r.rows[r.best].score, "# best configuration on " + std::to_string(fx.size()) +
                                                        " fixture(s)");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Entry point

/// args excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
  CLI::App app{"Table tennis bounce detection and classification"};
  app.name("ttsound");
  app.require_subcommand(1);
  Flags f;
  std::string a1, a2, a3;

  auto* detect = app.add_subcommand("detect", "detect bounce onsets in a WAV file; events CSV");
  detect->add_option("audio", a1, "input WAV")->required();
  detail::add_config(detect, f);
  detail::add_seed(detect, f);
  detail::add_detector(detect, f);
  detail::add_out(detect, f, "events CSV (default: standard output)");

  auto* featurize = app.add_subcommand("featurize", "extract log-mel windows for a labeled manifest; TTFE1");
  featurize->add_option("manifest", a1, "CSV manifest path,onset_ms,surface,spin")->required();
  detail::add_config(featurize, f);
  detail::add_seed(featurize, f);
  detail::add_out(featurize, f, "TTFE1 feature file", true);

  auto* train = app.add_subcommand("train", "train a classifier on a TTFE1 file; TTSB1 model + log CSV");
  train->add_option("features", a1, "TTFE1 feature file")->required();
  detail::add_config(train, f);
  detail::add_seed(train, f);
  detail::add_task(train, f);
  detail::add_method(train, f);
  detail::add_out(train, f, "TTSB1 model file", true);

  auto* eval = app.add_subcommand("eval", "score a model on a TTFE1 file; report + confusion CSV");
  eval->add_option("model", a1, "TTSB1 model file")->required();
  eval->add_option("features", a2, "TTFE1 feature file")->required();
  detail::add_config(eval, f);
  detail::add_seed(eval, f);
  detail::add_out(eval, f, "report path; CSVs go beside it");

  auto* run = app.add_subcommand("run", "detect and classify every bounce in a recording");
  run->add_option("audio", a1, "input WAV (44.1 kHz)")->required();
  run->add_option("surface_model", a2, "TTSB1 surface model")->required();
  run->add_option("spin_model", a3, "TTSB1 spin model (optional)");
  detail::add_config(run, f);
  detail::add_seed(run, f);
  detail::add_detector(run, f);
  detail::add_out(run, f, "annotated events CSV (default: standard output)");

  auto* mix = app.add_subcommand("mix", "overlay noise on a signal at a given SNR; WAV");
  mix->add_option("signal", a1, "signal WAV")->required();
  mix->add_option("noise", a2, "noise WAV (tiled or truncated)")->required();
  detail::add_config(mix, f);
  detail::add_seed(mix, f);
  detail::add_snr(mix, f, "signal-to-noise ratio in dB");
  detail::add_out(mix, f, "mixed WAV", true);

  auto* grid = app.add_subcommand("grid-search", "sweep gamma x threshold multiplier; score table CSV");
  grid->add_option("--manifest", a1, "score annotated recordings instead of synthetic fixtures");
  detail::add_config(grid, f);
  detail::add_seed(grid, f);
  detail::add_detector(grid, f);
  detail::add_snr(grid, f, "overlay speech-band noise at this SNR");
  f.given.emplace("fixtures", grid->add_option("--fixtures", f.fixtures, "number of synthetic fixtures"));
  f.given.emplace("gammas", grid->add_option("--gammas", f.gammas, "comma-separated gamma values"));
  f.given.emplace("multipliers", grid->add_option("--multipliers", f.multipliers, "comma-separated threshold multipliers"));
  detail::add_out(grid, f, "score table CSV (default: standard output)");

  std::vector<std::string> argv{"ttsound"};
  argv.insert(argv.end(), args.begin(), args.end());
  std::vector<const char*> cargv;
  for (const auto& s : argv) cargv.push_back(s.c_str());
  try
  {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  }
  catch (const CLI::CallForHelp&)
  {
    const auto subs = app.get_subcommands();
    out << (subs.empty() ? app.help() : subs.front()->help());
    return kExitOk;
  }
  catch (const CLI::ParseError& e)
  {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitInput;
  }

  try
  {
    Context ctx{out, err, f, effective_config(f)};
    if (*detect) return cmd_detect(ctx, a1);
    if (*featurize) return cmd_featurize(ctx, a1);
    if (*train) return cmd_train(ctx, a1);
    if (*eval) return cmd_eval(ctx, a1, a2);
    if (*run) return cmd_run(ctx, a1, a2, a3);
    if (*mix) return cmd_mix(ctx, a1, a2);
    if (*grid) return cmd_grid_search(ctx, a1);
    err << app.help();
    return kExitInput;
  }
  catch (const Error& e)
  {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  }
  catch (const std::filesystem::filesystem_error& e)
  {
    err << "error: " << e.what() << '\n';
    return kExitInput;
  }
  catch (const std::exception& e)
  {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

} // namespace ttsound::cli
