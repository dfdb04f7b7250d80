#include "specsplit/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "specsplit/archsearch.hpp"
#include "specsplit/augment.hpp"
#include "specsplit/error.hpp"
#include "specsplit/hypercube.hpp"
#include "specsplit/metrics.hpp"
#include "specsplit/ssanet.hpp"
#include "specsplit/synthetic.hpp"
#include "specsplit/trainer.hpp"

namespace specsplit::cli {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool quiet = false;
  std::string device = "cpu";
};

struct Context {
  GlobalOptions global;
  std::vector<std::string> argv;
  std::string started_at;
  std::ostream* out = nullptr;
  std::ostream* err = nullptr;

  std::ostream& log() const {
    static std::ostream null_stream(nullptr);
    return global.quiet ? null_stream : *err;
  }
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path scratch_dir() {
  if (const char* env = std::getenv("SPECSPLIT_CACHE"); env && *env) return env;
  return fs::temp_directory_path() / "specsplit";
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

json read_json_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void require_exists(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file or directory: " + path.string());
}

std::vector<fs::path> list_with_extension(const fs::path& dir, const std::string& ext) {
  require_exists(dir);
  if (!fs::is_directory(dir)) throw IoError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ext) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

std::vector<HyperCube> load_cubes(const std::vector<fs::path>& files) {
  std::vector<HyperCube> cubes;
  cubes.reserve(files.size());
  for (const auto& f : files) cubes.push_back(read_cube(f));
  return cubes;
}

json paths_json(const std::vector<fs::path>& paths) {
  auto arr = json::array();
  for (const auto& p : paths) arr.push_back(p.string());
  return arr;
}

/// One manifest per run, placed next to the outputs.
void write_run_manifest(const Context& ctx, const fs::path& path, const std::string& subcommand,
                        json config, const std::vector<fs::path>& inputs,
                        const std::vector<fs::path>& outputs) {
  json m;
  m["subcommand"] = subcommand;
  m["tool_version"] = SPECSPLIT_VERSION;
  m["argv"] = ctx.argv;
  m["seed"] = ctx.global.seed;
  m["threads"] = ctx.global.threads;
  m["config"] = std::move(config);
  m["inputs"] = paths_json(inputs);
  m["outputs"] = paths_json(outputs);
  m["started_at"] = ctx.started_at;
  m["finished_at"] = utc_now();
  write_text(path, m.dump(2) + "\n");
}

int parse_loss(const std::string& s, trainer::Loss& loss) {
  if (s == "l1" || s == "L1") {
    loss = trainer::Loss::L1;
  } else if (s == "l2" || s == "L2") {
    loss = trainer::Loss::L2;
  } else {
    throw ArgumentError("loss must be l1 or l2");
  }
  return 0;
}

std::vector<double> parse_sigmas(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ArgumentError("bad sigma value '" + item + "'");
    }
  }
  return out;
}

// ---------------------------------------------------------------- import

struct ImportOptions {
  std::vector<std::string> files;
  std::string dir;
  std::string out;
  double wl_start = 0.0;
  double wl_step = 0.0;
  bool normalize = false;
};

int run_import(const Context& ctx, const ImportOptions& o) {
  std::vector<fs::path> inputs;
  if (!o.dir.empty()) inputs = list_with_extension(o.dir, ".png");
  for (const auto& f : o.files) inputs.emplace_back(f);
  if (inputs.empty()) throw ArgumentError("import needs band images (positional or --dir)");
  for (const auto& p : inputs) require_exists(p);
  HyperCube cube = import_band_stack(inputs);
  if (o.wl_step > 0.0) {
    std::vector<double> wl(cube.bands());
    for (std::size_t b = 0; b < wl.size(); ++b) wl[b] = o.wl_start + o.wl_step * static_cast<double>(b);
    cube.set_wavelengths_nm(std::move(wl));
  }
  if (o.normalize) cube = normalize(cube);
  write_cube(cube, o.out);
  ctx.log() << "imported " << cube.bands() << " bands (" << cube.height() << "x" << cube.width()
            << ") -> " << o.out << "\n";
  json cfg{{"normalize", o.normalize}, {"wavelength_start_nm", o.wl_start}, {"wavelength_step_nm", o.wl_step}};
  write_run_manifest(ctx, o.out + ".manifest.json", "import", cfg, inputs, {o.out});
  return kOk;
}

// ---------------------------------------------------------------- downsample

struct DownsampleOptions {
  std::string in;
  std::string out;
  int scale = 2;
  std::string direction = "down";
};

int run_downsample(const Context& ctx, const DownsampleOptions& o) {
  require_exists(o.in);
  if (o.direction != "down" && o.direction != "up") throw ArgumentError("--direction must be down or up");
  const auto dir = o.direction == "down" ? ResampleDirection::Down : ResampleDirection::Up;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  if (fs::is_directory(o.in)) {
    inputs = list_with_extension(o.in, ".hsc");
    fs::create_directories(o.out);
    for (const auto& f : inputs) outputs.push_back(fs::path(o.out) / f.filename());
  } else {
    inputs = {o.in};
    outputs = {o.out};
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    write_cube(bicubic_resample(read_cube(inputs[i]), o.scale, dir), outputs[i]);
  }
  ctx.log() << "resampled " << inputs.size() << " cube(s) x" << o.scale << " " << o.direction << "\n";
  const fs::path manifest = fs::is_directory(o.out) ? fs::path(o.out) / "run_manifest.json"
                                                    : fs::path(o.out + ".manifest.json");
  write_run_manifest(ctx, manifest, "downsample", json{{"scale", o.scale}, {"direction", o.direction}},
                     inputs, outputs);
  return kOk;
}

// ---------------------------------------------------------------- augment

struct AugmentOptions {
  std::string in;
  std::string out;
  std::string sigmas = "0.3,1.0,3.0";
  std::size_t patch = 8;
  std::size_t overlap = 4;
  bool symmetry = false;
};

json synthesis_json(const augment::SynthesisConfig& c, bool symmetry) {
  return json{{"sigmas", c.sigmas}, {"patch_size", c.patch_size}, {"patch_overlap", c.patch_overlap},
              {"symmetry", symmetry}};
}

std::vector<fs::path> write_expanded(const augment::ExpandedDataset& expanded,
                                     const std::vector<fs::path>& sources, const fs::path& out_dir,
                                     const json& config) {
  fs::create_directories(out_dir);
  std::vector<fs::path> outputs;
  auto entries = augment::manifest_to_json(expanded.manifest);
  for (std::size_t i = 0; i < expanded.cubes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%05zu.hsc", i);
    const auto path = out_dir / name;
    write_cube(expanded.cubes[i], path);
    outputs.push_back(path);
    entries[i]["file"] = name;
    if (expanded.manifest[i].kind == augment::ProvenanceEntry::Kind::Original && i < sources.size()) {
      entries[i]["original_file"] = sources[i].filename().string();
    }
  }
  json manifest{{"config", config}, {"samples", entries}};
  write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
  outputs.push_back(out_dir / "manifest.json");
  return outputs;
}

int run_augment(const Context& ctx, const AugmentOptions& o) {
  const auto inputs = list_with_extension(o.in, ".hsc");
  if (inputs.empty()) throw IoError("no .hsc cubes in " + o.in);
  const auto cubes = load_cubes(inputs);
  augment::SynthesisConfig cfg;
  cfg.sigmas = parse_sigmas(o.sigmas);
  cfg.patch_size = o.patch;
  cfg.patch_overlap = o.overlap;
  const auto expanded = augment::expand_dataset(cubes, cfg, o.symmetry, ctx.global.threads);
  const json config = synthesis_json(cfg, o.symmetry);
  const auto outputs = write_expanded(expanded, inputs, o.out, config);
  ctx.log() << "expanded " << cubes.size() << " -> " << expanded.cubes.size() << " cubes\n";
  write_run_manifest(ctx, fs::path(o.out) / "run_manifest.json", "augment", config, inputs, outputs);
  return kOk;
}

// ---------------------------------------------------------------- train

struct TrainOptions {
  std::string config;
  std::string preset = "default";
  std::string data;
  std::string out;
  int scale = 2;
  int epochs = 60;
  int batch = 4;
  double lr = 1e-4;
  int decay_every = 30;
  std::string loss = "l1";
  double val_fraction = 0.1;
  std::size_t patch = 0;
  std::size_t patch_overlap = 0;
};

ssanet::SSANetConfig resolve_model(const std::string& config_path, const std::string& preset,
                                   std::size_t bands, int scale) {
  if (!config_path.empty()) {
    auto c = ssanet::config_from_json(read_json_file(config_path));
    if (c.scale != scale) {
      c = ssanet::with_placement(std::move(c), ssanet::default_placement(scale));
      c.scale = scale;
      c.validate();
    }
    return c;
  }
  if (preset == "mini") {
    auto c = ssanet::miniature_config(scale);
    if (bands != c.bands) throw ShapeError("the mini preset expects 4-band cubes");
    return c;
  }
  if (preset != "default") throw ArgumentError("--preset must be default or mini");
  return ssanet::default_config(bands, scale);
}

std::vector<HyperCube> maybe_patches(const std::vector<HyperCube>& cubes, std::size_t patch,
                                     std::size_t overlap) {
  if (patch == 0) return cubes;
  std::vector<HyperCube> out;
  for (const auto& c : cubes) {
    auto ps = extract_patches(c, patch, overlap);
    std::move(ps.begin(), ps.end(), std::back_inserter(out));
  }
  return out;
}

int run_train(const Context& ctx, const TrainOptions& o) {
  const auto files = list_with_extension(o.data, ".hsc");
  if (files.empty()) throw IoError("no .hsc cubes in " + o.data);
  const auto cubes = load_cubes(files);
  const auto model = resolve_model(o.config, o.preset, cubes.front().bands(), o.scale);

  trainer::TrainConfig tc;
  tc.lr0 = o.lr;
  tc.decay_every = o.decay_every;
  tc.epochs = o.epochs;
  tc.batch_size = o.batch;
  tc.seed = ctx.global.seed;
  parse_loss(o.loss, tc.loss);

  const auto [train_idx, val_idx] = trainer::holdout_split(cubes.size(), o.val_fraction, tc.seed);
  std::vector<HyperCube> train_hr;
  std::vector<HyperCube> val_hr;
  for (auto i : train_idx) train_hr.push_back(cubes[i]);
  for (auto i : val_idx) val_hr.push_back(cubes[i]);
  const auto train_pairs = trainer::make_pairs(maybe_patches(train_hr, o.patch, o.patch_overlap), o.scale);
  const auto val_pairs = trainer::make_pairs(val_hr, o.scale);

  const fs::path out = o.out.empty() ? scratch_dir() / ("train-" + std::to_string(tc.seed)) : fs::path(o.out);
  fs::create_directories(out);
  write_text(out / "model.json", ssanet::config_to_json(model).dump(2) + "\n");

  trainer::TrainOptions topts;
  topts.checkpoint_dir = out;
  topts.on_epoch = [&](const trainer::EpochRecord& r) {
    ctx.log() << "epoch " << r.epoch << " lr " << r.lr << " loss " << r.mean_loss;
    if (r.validation) ctx.log() << " val_psnr " << metrics::format_value(r.validation->psnr_db);
    ctx.log() << "\n";
  };
  const auto result = trainer::train(model, tc, train_pairs, val_pairs, topts);
  if (tc.epochs == 0) ssanet::save_checkpoint(out / "best.ssap", model, result.params);
  write_text(out / "train_log.jsonl", trainer::log_to_jsonl(result.log));

  json cfg{{"model", ssanet::config_to_json(model)},
           {"lr0", tc.lr0},
           {"decay_factor", tc.decay_factor},
           {"decay_every", tc.decay_every},
           {"epochs", tc.epochs},
           {"batch_size", tc.batch_size},
           {"loss", o.loss},
           {"val_fraction", o.val_fraction},
           {"patch", o.patch},
           {"patch_overlap", o.patch_overlap}};
  std::vector<fs::path> outputs{out / "model.json", out / "best.ssap", out / "train_log.jsonl"};
  if (tc.epochs > 0) outputs.push_back(out / "last.ssap");
  write_run_manifest(ctx, out / "run_manifest.json", "train", cfg, files, outputs);
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalOptions {
  std::string ckpt;
  std::string data;
  std::string out;
  int scale = 0;
  bool baseline = false;
};

std::vector<HyperCube> bicubic_baseline(const std::vector<trainer::SamplePair>& pairs, int scale) {
  std::vector<HyperCube> out;
  for (const auto& p : pairs) out.push_back(bicubic_resample(p.lr, scale, ResampleDirection::Up));
  return out;
}

json evaluation_json(const std::vector<std::string>& labels, const trainer::Evaluation& ev) {
  json j;
  j["mean"] = metrics::to_json(ev.mean, false);
  auto images = json::array();
  for (std::size_t i = 0; i < ev.per_image.size(); ++i) {
    auto r = metrics::to_json(ev.per_image[i]);
    json entry{{"image", labels[i]}};
    entry.update(r);
    images.push_back(std::move(entry));
  }
  j["images"] = std::move(images);
  return j;
}

std::string evaluation_table(const std::vector<std::string>& labels, const trainer::Evaluation& ev) {
  std::vector<std::pair<std::string, metrics::MetricReport>> rows;
  for (std::size_t i = 0; i < ev.per_image.size(); ++i) rows.emplace_back(labels[i], ev.per_image[i]);
  rows.emplace_back("mean", ev.mean);
  return metrics::format_table(rows);
}

trainer::Evaluation score(const std::vector<HyperCube>& sr, const std::vector<trainer::SamplePair>& pairs,
                          int scale) {
  trainer::Evaluation ev;
  for (std::size_t i = 0; i < sr.size(); ++i) ev.per_image.push_back(metrics::evaluate_all(sr[i], pairs[i].hr, scale));
  ev.mean = metrics::mean_report(ev.per_image);
  return ev;
}

int run_eval(const Context& ctx, const EvalOptions& o) {
  const auto files = list_with_extension(o.data, ".hsc");
  if (files.empty()) throw IoError("no .hsc cubes in " + o.data);
  const auto cubes = load_cubes(files);
  std::vector<std::string> labels;
  for (const auto& f : files) labels.push_back(f.stem().string());

  trainer::Evaluation ev;
  json cfg;
  int scale = o.scale;
  if (o.baseline) {
    if (scale == 0) throw ArgumentError("--baseline needs --scale");
    const auto pairs = trainer::make_pairs(cubes, scale);
    ev = score(bicubic_baseline(pairs, scale), pairs, scale);
    cfg = json{{"baseline", "bicubic"}, {"scale", scale}};
  } else {
    if (o.ckpt.empty()) throw ArgumentError("eval needs --ckpt or --baseline");
    require_exists(o.ckpt);
    const auto [model, params] = ssanet::load_checkpoint(o.ckpt);
    if (scale != 0 && scale != model.scale) {
      throw ArgumentError("--scale " + std::to_string(scale) + " does not match the checkpoint (x" +
                          std::to_string(model.scale) + ")");
    }
    scale = model.scale;
    const auto pairs = trainer::make_pairs(cubes, scale);
    std::vector<HyperCube> sr;
    ssanet::ForwardOptions fo;
    fo.threads = ctx.global.threads;
    for (const auto& p : pairs) sr.push_back(ssanet::forward(p.lr, model, params, fo));
    ev = score(sr, pairs, scale);
    cfg = json{{"checkpoint", o.ckpt}, {"model", ssanet::config_to_json(model)}};
  }
  *ctx.out << evaluation_table(labels, ev);
  if (!o.out.empty()) {
    const fs::path out = o.out;
    fs::create_directories(out);
    write_text(out / "report.json", evaluation_json(labels, ev).dump(2) + "\n");
    write_text(out / "report.md", evaluation_table(labels, ev));
    auto inputs = files;
    if (!o.ckpt.empty()) inputs.emplace_back(o.ckpt);
    write_run_manifest(ctx, out / "run_manifest.json", "eval", cfg, inputs,
                       {out / "report.json", out / "report.md"});
  }
  return kOk;
}

// ---------------------------------------------------------------- search

struct SearchOptions {
  int scale = 2;
  std::size_t bands = 33;
  std::size_t lr_size = 32;
  std::string config;
  std::string csv;
  std::string md;
  std::string out;
  int train_epochs = 0;
  std::string data;
};

int run_search(const Context& ctx, const SearchOptions& o) {
  ssanet::SSANetConfig base;
  if (!o.config.empty()) {
    base = ssanet::config_from_json(read_json_file(o.config));
  } else {
    base = ssanet::default_config(o.bands, 2);
  }
  archsearch::PlacementEvaluator evaluator;
  std::vector<trainer::SamplePair> train_pairs;
  std::vector<trainer::SamplePair> val_pairs;
  std::vector<fs::path> inputs;
  if (o.train_epochs > 0) {
    if (o.data.empty()) throw ArgumentError("--train-epochs needs --data");
    inputs = list_with_extension(o.data, ".hsc");
    const auto cubes = load_cubes(inputs);
    const auto [tr, va] = trainer::holdout_split(cubes.size(), 0.1, ctx.global.seed);
    std::vector<HyperCube> trc, vac;
    for (auto i : tr) trc.push_back(cubes[i]);
    for (auto i : va) vac.push_back(cubes[i]);
    train_pairs = trainer::make_pairs(trc, o.scale);
    val_pairs = trainer::make_pairs(vac.empty() ? trc : vac, o.scale);
    evaluator = [&](const ssanet::SSANetConfig& c) {
      trainer::TrainConfig tc;
      tc.epochs = o.train_epochs;
      tc.seed = ctx.global.seed;
      const auto r = trainer::train(c, tc, train_pairs, {});
      return trainer::evaluate_model(r.params, c, val_pairs).mean.psnr_db;
    };
  }
  const auto rows = archsearch::search_report(o.scale, base, o.lr_size, o.lr_size, evaluator);
  const auto md = archsearch::to_markdown(rows);
  const auto csv = archsearch::to_csv(rows);
  *ctx.out << md;
  std::vector<fs::path> outputs;
  if (!o.csv.empty()) {
    write_text(o.csv, csv);
    outputs.emplace_back(o.csv);
  }
  if (!o.md.empty()) {
    write_text(o.md, md);
    outputs.emplace_back(o.md);
  }
  if (!o.out.empty()) {
    write_text(fs::path(o.out) / "search.csv", csv);
    write_text(fs::path(o.out) / "search.md", md);
    outputs.push_back(fs::path(o.out) / "search.csv");
    outputs.push_back(fs::path(o.out) / "search.md");
  }
  if (!outputs.empty()) {
    const fs::path manifest_dir = o.out.empty() ? outputs.front().parent_path() : fs::path(o.out);
    json cfg{{"scale", o.scale}, {"lr_size", o.lr_size}, {"base", ssanet::config_to_json(base)},
             {"train_epochs", o.train_epochs}};
    write_run_manifest(ctx, manifest_dir / "run_manifest.json", "search", cfg, inputs, outputs);
  }
  return kOk;
}

// ---------------------------------------------------------------- metrics

struct MetricsOptions {
  std::string a;
  std::string b;
  int scale = 2;
  bool as_json = false;
  std::string out;
};

int run_metrics(const Context& ctx, const MetricsOptions& o) {
  require_exists(o.a);
  require_exists(o.b);
  const auto x = read_cube(o.a);
  const auto ref = read_cube(o.b);
  const auto report = metrics::evaluate_all(x, ref, o.scale);
  if (o.as_json) {
    *ctx.out << metrics::to_json(report, false).dump() << "\n";
  } else {
    *ctx.out << metrics::format_table({{fs::path(o.a).stem().string(), report}});
  }
  if (!o.out.empty()) {
    write_text(o.out, metrics::to_json(report).dump(2) + "\n");
    write_run_manifest(ctx, o.out + ".manifest.json", "metrics", json{{"scale", o.scale}},
                       {o.a, o.b}, {o.out});
  }
  return kOk;
}

// ---------------------------------------------------------------- demo

struct DemoOptions {
  std::string out = "specsplit-demo";
  std::size_t samples = 8;
  std::size_t size = 32;
  int epochs = 30;
  double lr = 1e-3;
};

std::string sigma_curve_csv(const std::vector<HyperCube>& train_hr, const augment::SynthesisConfig& base) {
  std::string csv = "sigma,rmse\n";
  for (double sigma : {0.1, 0.3, 1.0, 3.0, 10.0, 1e3}) {
    augment::SynthesisConfig c = base;
    c.sigma = sigma;
    double acc = 0.0;
    for (std::size_t i = 0; i < train_hr.size(); ++i) {
      acc += metrics::rmse(augment::synthesize_sample(i, train_hr, c), train_hr[i]);
    }
    char line[64];
    std::snprintf(line, sizeof line, "%g,%.10f\n", sigma, acc / static_cast<double>(train_hr.size()));
    csv += line;
  }
  return csv;
}

int run_demo(const Context& ctx, const DemoOptions& o) {
  const fs::path root = o.out;
  const std::uint64_t seed = ctx.global.seed;
  const int scale = 2;
  const auto model = ssanet::miniature_config(scale);
  auto cubes = synthetic::make_dataset(o.samples, o.size, o.size, model.bands, seed);

  // Subject-disjoint split: all captures of a subject land on the same side.
  auto [train_subj, test_subj] = trainer::holdout_split(synthetic::subject_count(cubes.size()), 0.25, seed);
  std::sort(train_subj.begin(), train_subj.end());
  std::sort(test_subj.begin(), test_subj.end());
  std::vector<HyperCube> train_hr, test_hr;
  std::vector<fs::path> written;
  auto take = [&](const std::vector<std::size_t>& subjects, std::vector<HyperCube>& into) {
    for (auto s : subjects) {
      for (std::size_t i = s * synthetic::kCapturesPerSubject;
           i < std::min(cubes.size(), (s + 1) * synthetic::kCapturesPerSubject); ++i) {
        into.push_back(cubes[i]);
      }
    }
  };
  take(train_subj, train_hr);
  take(test_subj, test_hr);
  auto dump_set = [&](const std::vector<HyperCube>& set, const std::string& name) {
    std::vector<fs::path> paths;
    for (std::size_t i = 0; i < set.size(); ++i) {
      char fname[32];
      std::snprintf(fname, sizeof fname, "%s_%02zu.hsc", name.c_str(), i);
      const auto hr = root / "data" / "hr" / name / fname;
      const auto lr = root / "data" / "lr" / name / fname;
      fs::create_directories(hr.parent_path());
      fs::create_directories(lr.parent_path());
      write_cube(set[i], hr);
      write_cube(bicubic_resample(set[i], scale, ResampleDirection::Down), lr);
      paths.push_back(hr);
      written.push_back(hr);
      written.push_back(lr);
    }
    return paths;
  };
  const auto train_files = dump_set(train_hr, "train");
  dump_set(test_hr, "test");
  ctx.log() << "demo: " << train_hr.size() << " train / " << test_hr.size() << " test cubes\n";

  augment::SynthesisConfig syn;
  write_text(root / "plots" / "sigma_rmse.csv", sigma_curve_csv(train_hr, syn));

  const auto expanded = augment::expand_dataset(train_hr, syn, true, ctx.global.threads);
  const auto aug_files = write_expanded(expanded, train_files, root / "data" / "augmented",
                                        synthesis_json(syn, true));
  ctx.log() << "demo: augmented to " << expanded.cubes.size() << " cubes\n";

  trainer::TrainConfig tc;
  tc.epochs = o.epochs;
  tc.lr0 = o.lr;
  tc.decay_every = std::max(1, o.epochs / 2);
  tc.seed = seed;
  const auto train_pairs = trainer::make_pairs(expanded.cubes, scale);
  const auto test_pairs = trainer::make_pairs(test_hr, scale);
  trainer::TrainOptions topts;
  topts.checkpoint_dir = root / "model";
  fs::create_directories(*topts.checkpoint_dir);
  topts.on_epoch = [&](const trainer::EpochRecord& r) {
    ctx.log() << "demo: epoch " << r.epoch << " loss " << r.mean_loss << "\n";
  };
  const auto result = trainer::train(model, tc, train_pairs, {}, topts);
  write_text(root / "model" / "model.json", ssanet::config_to_json(model).dump(2) + "\n");

  std::string loss_csv = "step,loss\n";
  for (std::size_t s = 0; s < result.log.step_loss.size(); ++s) {
    char line[64];
    std::snprintf(line, sizeof line, "%zu,%.10f\n", s, result.log.step_loss[s]);
    loss_csv += line;
  }
  write_text(root / "plots" / "loss_curve.csv", loss_csv);
  std::string lr_csv = "epoch,lr\n";
  for (std::size_t e = 0; e < result.log.lr_trace.size(); ++e) {
    char line[64];
    std::snprintf(line, sizeof line, "%zu,%g\n", e, result.log.lr_trace[e]);
    lr_csv += line;
  }
  write_text(root / "plots" / "lr_trace.csv", lr_csv);
  write_text(root / "reports" / "train_log.jsonl", trainer::log_to_jsonl(result.log, false));

  std::vector<std::string> labels;
  for (std::size_t i = 0; i < test_hr.size(); ++i) labels.push_back("test_" + std::to_string(i));
  const auto ev = trainer::evaluate_model(result.params, model, test_pairs);
  const auto base = score(bicubic_baseline(test_pairs, scale), test_pairs, scale);
  write_text(root / "reports" / "ssanet.json", evaluation_json(labels, ev).dump(2) + "\n");
  write_text(root / "reports" / "bicubic.json", evaluation_json(labels, base).dump(2) + "\n");
  write_text(root / "reports" / "summary.md",
             metrics::format_table({{"bicubic", base.mean}, {"ssanet (mini)", ev.mean}}));
  const auto rows = archsearch::search_report(scale, model, o.size / scale, o.size / scale);
  write_text(root / "reports" / "search_x2.csv", archsearch::to_csv(rows));
  *ctx.out << metrics::format_table({{"bicubic", base.mean}, {"ssanet (mini)", ev.mean}});

  json cfg{{"samples", o.samples}, {"size", o.size}, {"scale", scale}, {"epochs", o.epochs}, {"lr0", o.lr},
           {"decay_every", tc.decay_every}, {"model", ssanet::config_to_json(model)},
           {"synthesis", synthesis_json(syn, true)}, {"train_wall_seconds", result.log.wall_seconds}};
  std::vector<fs::path> outputs = written;
  outputs.insert(outputs.end(), aug_files.begin(), aug_files.end());
  for (const char* f : {"plots/sigma_rmse.csv", "plots/loss_curve.csv", "plots/lr_trace.csv",
                        "reports/train_log.jsonl", "reports/ssanet.json", "reports/bicubic.json",
                        "reports/summary.md", "reports/search_x2.csv", "model/model.json",
                        "model/best.ssap", "model/last.ssap"}) {
    outputs.push_back(root / f);
  }
  write_run_manifest(ctx, root / "run_manifest.json", "demo", cfg, {}, outputs);
  return kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Context ctx;
  ctx.out = &out;
  ctx.err = &err;
  ctx.started_at = utc_now();
  ctx.argv = args;

  CLI::App app{"specsplit: hyperspectral super-resolution toolkit"};
  app.name("specsplit");
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--seed", ctx.global.seed, "Random seed");
  app.add_option("--threads", ctx.global.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", ctx.global.quiet, "Suppress progress output");
  app.add_option("--device", ctx.global.device, "Compute device (cpu)");

  ImportOptions imp;
  auto* c_import = app.add_subcommand("import", "Stack grayscale PNG bands into an HSC1 cube");
  c_import->add_option("files", imp.files, "Band images in band order");
  c_import->add_option("--dir", imp.dir, "Directory of band PNGs (sorted by name)");
  c_import->add_option("--out", imp.out, "Output .hsc")->required();
  c_import->add_option("--wavelength-start", imp.wl_start, "First band centre (nm)");
  c_import->add_option("--wavelength-step", imp.wl_step, "Band spacing (nm)");
  c_import->add_flag("--normalize", imp.normalize, "Scale so the maximum is 1");

  DownsampleOptions down;
  auto* c_down = app.add_subcommand("downsample", "Bicubic degradation of a cube or directory");
  c_down->add_option("--in", down.in, "Input .hsc or directory")->required();
  c_down->add_option("--out", down.out, "Output .hsc or directory")->required();
  c_down->add_option("--scale", down.scale, "Factor (2, 4, 8)")->required();
  c_down->add_option("--direction", down.direction, "down or up");

  AugmentOptions aug;
  auto* c_aug = app.add_subcommand("augment", "Self-representation and symmetry expansion");
  c_aug->add_option("--in", aug.in, "Directory of .hsc cubes")->required();
  c_aug->add_option("--out", aug.out, "Output directory")->required();
  c_aug->add_option("--sigmas", aug.sigmas, "Comma-separated sigma values");
  c_aug->add_option("--patch", aug.patch, "Patch size");
  c_aug->add_option("--overlap", aug.overlap, "Patch overlap");
  c_aug->add_flag("--symmetry", aug.symmetry, "Add horizontally flipped copies");

  TrainOptions tr;
  auto* c_train = app.add_subcommand("train", "Train SSANet on HR cubes");
  c_train->add_option("--config", tr.config, "Model config JSON");
  c_train->add_option("--preset", tr.preset, "default or mini (when no --config)");
  c_train->add_option("--data", tr.data, "Directory of HR .hsc cubes")->required();
  c_train->add_option("--scale", tr.scale, "Upsampling factor (2, 4, 8)");
  c_train->add_option("--epochs", tr.epochs, "Epochs");
  c_train->add_option("--batch", tr.batch, "Batch size");
  c_train->add_option("--lr", tr.lr, "Initial learning rate");
  c_train->add_option("--decay-every", tr.decay_every, "Epochs per 10x decay");
  c_train->add_option("--loss", tr.loss, "l1 or l2");
  c_train->add_option("--val-fraction", tr.val_fraction, "Holdout fraction");
  c_train->add_option("--patch", tr.patch, "Train on HR patches of this size (0 = whole cubes)");
  c_train->add_option("--patch-overlap", tr.patch_overlap, "Overlap of training patches");
  c_train->add_option("--out", tr.out, "Checkpoint directory");

  EvalOptions ev;
  auto* c_eval = app.add_subcommand("eval", "Score a checkpoint (or bicubic) on HR cubes");
  c_eval->add_option("--ckpt", ev.ckpt, "SSAP checkpoint");
  c_eval->add_option("--data", ev.data, "Directory of HR .hsc cubes")->required();
  c_eval->add_option("--scale", ev.scale, "Upsampling factor");
  c_eval->add_flag("--baseline", ev.baseline, "Score bicubic upsampling instead of a model");
  c_eval->add_option("--out", ev.out, "Report directory");

  SearchOptions se;
  auto* c_search = app.add_subcommand("search", "Enumerate upsampler placements with costs");
  c_search->add_option("--scale", se.scale, "Upsampling factor (2, 4, 8)");
  c_search->add_option("--bands", se.bands, "Band count of the default model");
  c_search->add_option("--lr-size", se.lr_size, "LR input side length for FLOPs");
  c_search->add_option("--config", se.config, "Base model config JSON");
  c_search->add_option("--csv", se.csv, "Write CSV here");
  c_search->add_option("--md", se.md, "Write Markdown here");
  c_search->add_option("--out", se.out, "Output directory");
  c_search->add_option("--train-epochs", se.train_epochs, "Short-train each placement");
  c_search->add_option("--data", se.data, "HR cubes for --train-epochs");

  MetricsOptions me;
  auto* c_metrics = app.add_subcommand("metrics", "Six quality indices for a cube pair");
  c_metrics->add_option("--a", me.a, "Reconstruction .hsc")->required();
  c_metrics->add_option("--b", me.b, "Reference .hsc")->required();
  c_metrics->add_option("--scale", me.scale, "Upsampling factor for ERGAS");
  c_metrics->add_flag("--json", me.as_json, "Print JSON instead of a table");
  c_metrics->add_option("--out", me.out, "Also write the report JSON here");

  DemoOptions de;
  auto* c_demo = app.add_subcommand("demo", "End-to-end run on synthetic data");
  c_demo->add_option("--out", de.out, "Output directory");
  c_demo->add_option("--samples", de.samples, "Number of synthetic cubes");
  c_demo->add_option("--size", de.size, "HR side length");
  c_demo->add_option("--epochs", de.epochs, "Training epochs");
  c_demo->add_option("--lr", de.lr, "Initial learning rate");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (ctx.global.device != "cpu") throw ArgumentError("only --device cpu is supported");
    if (*c_import) return run_import(ctx, imp);
    if (*c_down) return run_downsample(ctx, down);
    if (*c_aug) return run_augment(ctx, aug);
    if (*c_train) return run_train(ctx, tr);
    if (*c_eval) return run_eval(ctx, ev);
    if (*c_search) return run_search(ctx, se);
    if (*c_metrics) return run_metrics(ctx, me);
    if (*c_demo) return run_demo(ctx, de);
  } catch (const ArgumentError& e) {
    err << "specsplit: " << e.what() << "\n";
    return kUsage;
  } catch (const DivergenceError& e) {
    err << "specsplit: " << e.what() << "\n";
    return kDivergence;
  } catch (const Error& e) {
    err << "specsplit: " << e.what() << "\n";
    return kDataError;
  } catch (const fs::filesystem_error& e) {
    err << "specsplit: " << e.what() << "\n";
    return kDataError;
  }
  err << app.help();
  return kUsage;
}

int main_entry(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace specsplit::cli
