#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <set>
#include <ostream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "graingraph/cli.hpp"
#include "graingraph/error.hpp"
#include "graingraph/graph_io.hpp"
#include "graingraph/metrics.hpp"
#include "graingraph/raster.hpp"

namespace graingraph::cli {

using nlohmann::json;

namespace {

constexpr const char* kToolName = "graingraph 0.1.0";
constexpr const char* kOutputEnv = "GRAINGRAPH_OUTPUT_DIR";

struct Flags {
  std::string config;
  std::string out;
  int workers = 1;
  std::optional<std::uint64_t> seed;
  std::optional<double> resolution;
};

struct Provenance {
  explicit Provenance(std::string cmd) : command(std::move(cmd)) {}

  std::string command;
  std::optional<std::string> config_hash;
  std::optional<std::uint64_t> seed;
  std::map<std::string, std::string> inputs;
  json extra = json::object();

  void write(const fs::path& path) const {
    json doc;
    doc["tool"] = kToolName;
    doc["command"] = command;
    doc["config_sha256"] = config_hash ? json(*config_hash) : json(nullptr);
    doc["seed"] = seed ? json(*seed) : json(nullptr);
    doc["inputs"] = inputs;
    for (const auto& [k, v] : extra.items()) doc[k] = v;
    write_text_file(path, doc.dump(2) + "\n");
  }
};

RunConfig load_config(const Flags& f) {
  if (f.config.empty()) throw Error(ErrorKind::config, "--config is required");
  RunConfig c = read_config(f.config);
  if (f.seed) c.seed = *f.seed;
  if (f.resolution) {
    if (!(*f.resolution > 0.0)) throw Error(ErrorKind::config, "--resolution must be positive");
    c.resolution = *f.resolution;
  }
  if (!f.out.empty()) {
    c.output = f.out;
  } else if (const char* env = std::getenv(kOutputEnv); env && *env) {
    c.output = env;
  }
  return c;
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::input, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

/// Runs task(k) for k in [0, n) on up to `workers` threads; rethrows the first failure.
template <typename F>
void parallel_for(std::size_t n, int workers, F&& task) {
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    for (std::size_t k = 0; k < n; ++k) task(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex m;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < n; k = next++) {
        try {
          task(k);
        } catch (...) {
          std::lock_guard lock(m);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

std::pair<std::uint32_t, std::uint32_t> pixels(const DomainSpec& d, std::optional<double> resolution) {
  return raster_size(d, resolution.value_or(kDefaultPixelsPerMicron));
}

int cmd_init(const Flags& f, std::ostream& out) {
  const RunConfig c = load_config(f);
  const GrainGraph g = load_substrate(c);
  make_dir(c.output);
  write_graph_file(g, c.output / "substrate.graph");
  Provenance p("init");
  p.config_hash = c.hash();
  p.seed = c.seed;
  if (c.resolution) {
    const auto [w, h] = pixels(g.domain(), c.resolution);
    write_index_image(graph_to_image(g, w, h), c.output / "substrate.gidx");
    p.extra["image"] = {{"width", w}, {"height", h}};
  }
  p.write(c.output / "provenance");
  out << fmt::format("substrate: {} grains, {} junctions -> {}\n", g.grain_count(), g.junction_count(),
                     (c.output / "substrate.graph").string());
  return 0;
}

DomainSpec image_domain(const Flags& f, const IndexImage& probe) {
  if (!f.config.empty()) return read_config(f.config).domain;
  const double res = f.resolution.value_or(kDefaultPixelsPerMicron);
  if (!(res > 0.0)) throw Error(ErrorKind::config, "--resolution must be positive");
  DomainSpec d;
  d.lx = probe.width / res;
  d.ly = probe.height / res;
  d.check();
  return d;
}

Extraction extract_file(const Flags& f, const fs::path& path) {
  IndexImage img = read_index_image(path);
  img.domain = image_domain(f, img);
  return image_to_graph(img);
}

int cmd_extract(const Flags& f, const std::string& image, std::ostream& out) {
  const Extraction ex = extract_file(f, image);
  const fs::path target = f.out.empty() ? fs::path(image).replace_extension(".graph") : fs::path(f.out);
  if (target.has_parent_path()) make_dir(target.parent_path());
  write_graph_file(ex.graph, target);
  Provenance p("extract");
  p.inputs[image] = sha256_file(image);
  if (!f.config.empty()) p.config_hash = read_config(f.config).hash();
  p.write(fs::path(target.string() + ".provenance"));
  const ValidationReport rep = validate(ex.graph);
  out << fmt::format("extracted {} grains, {} junctions -> {}\n", ex.graph.grain_count(), ex.graph.junction_count(),
                     target.string());
  if (!rep.ok()) out << "warning: extracted graph fails validation: " << rep.summary() << "\n";
  return 0;
}

int cmd_match(const Flags& f, const std::vector<std::string>& images, std::ostream& out) {
  if (images.size() < 2) throw Error(ErrorKind::input, "match needs at least two images");
  std::vector<GrainGraph> graphs(images.size());
  parallel_for(images.size(), f.workers, [&](std::size_t k) { graphs[k] = extract_file(f, images[k]).graph; });
  const fs::path target = f.out.empty() ? fs::path("pairs.jsonl") : fs::path(f.out);
  if (target.has_parent_path()) make_dir(target.parent_path());
  std::string archive;
  std::size_t events = 0;
  for (std::size_t k = 0; k + 1 < graphs.size(); ++k) {
    const MatchResult m = match_graphs(graphs[k], graphs[k + 1]);
    events += m.edge_events.size() + m.eliminated.size();
    archive += training_record(graphs[k], graphs[k + 1], m) + "\n";
  }
  write_text_file(target, archive);
  Provenance p("match");
  for (const std::string& img : images) p.inputs[img] = sha256_file(img);
  if (!f.config.empty()) p.config_hash = read_config(f.config).hash();
  p.write(fs::path(target.string() + ".provenance"));
  out << fmt::format("{} pairs, {} events -> {}\n", graphs.size() - 1, events, target.string());
  return 0;
}

int cmd_evolve(const Flags& f, std::ostream& out, std::ostream& err) {
  const RunConfig base = load_config(f);
  const LayerPlan plan = layer_plan(base);
  const std::unique_ptr<Predictor> predictor = make_predictor(base);
  const std::size_t members = static_cast<std::size_t>(base.ensemble);
  std::vector<std::optional<Error>> failures(members);
  std::vector<std::string> lines(members);
  parallel_for(members, f.workers, [&](std::size_t k) {
    RunConfig c = base;
    c.seed = base.seed + k;
    const fs::path dir = members == 1 ? c.output : c.output / fmt::format("member_{:03d}", k);
    const GrainGraph g0 = load_substrate(c);
    RolloutOptions opt;
    opt.n_l = plan.n_l;
    opt.dz = plan.dz;
    opt.thresholds = c.thresholds;
    const Trajectory t = rollout(g0, *predictor, opt);
    make_dir(dir);
    write_trajectory(t, dir);
    Provenance p("evolve");
    p.config_hash = base.hash();
    p.seed = c.seed;
    p.extra["predictor"] = predictor->name();
    p.extra["n_l"] = plan.n_l;
    p.extra["dz"] = plan.dz;
    p.extra["layers_written"] = t.layers.size();
    if (t.failure) p.extra["failure"] = {{"kind", to_string(t.failure->kind())}, {"message", t.failure->what()}};
    p.write(dir / "provenance");
    failures[k] = t.failure;
    std::size_t removed = 0;
    for (const auto& step : t.events) {
      for (const EventRecord& e : step) removed += e.kind != EventKind::flip;
    }
    lines[k] = fmt::format("{}: {} layers, dz {:.4g}, grains {} -> {}, eliminated {}\n", dir.string(), t.layers.size(),
                           plan.dz, g0.grain_count(), t.layers.back().grain_count(), removed);
  });
  for (const std::string& l : lines) out << l;
  for (std::size_t k = 0; k < members; ++k) {
    if (failures[k]) {
      err << fmt::format("error: member {} stopped early: {}\n", k, failures[k]->what());
      return exit_code(failures[k]->kind());
    }
  }
  return 0;
}

std::vector<IndexImage> rasterize(const Trajectory& t, std::uint32_t w, std::uint32_t h, int workers) {
  std::vector<IndexImage> images(t.layers.size());
  parallel_for(t.layers.size(), workers, [&](std::size_t l) { images[l] = graph_to_image(t.layers[l], w, h); });
  return images;
}

int cmd_reconstruct(const Flags& f, const std::string& dir, std::ostream& out) {
  const Trajectory t = read_trajectory(dir);
  const fs::path target = f.out.empty() ? fs::path(dir) : fs::path(f.out);
  make_dir(target);
  std::optional<double> res = f.resolution;
  if (!res && !f.config.empty()) res = read_config(f.config).resolution;
  const auto [w, h] = pixels(t.layers.front().domain(), res);
  const std::vector<IndexImage> images = rasterize(t, w, h, f.workers);
  for (std::size_t l = 0; l < images.size(); ++l) write_index_image(images[l], target / layer_name(l, "gidx"));
  write_index_volume(stack_layers(images, t.dz), target / "volume.gvol");
  Provenance p("reconstruct");
  p.inputs[(fs::path(dir) / "provenance").string()] =
      fs::exists(fs::path(dir) / "provenance") ? sha256_file(fs::path(dir) / "provenance") : "";
  p.extra["width"] = w;
  p.extra["height"] = h;
  p.write(target / "volume.gvol.provenance");
  out << fmt::format("{} layers at {}x{} -> {}\n", images.size(), w, h, (target / "volume.gvol").string());
  return 0;
}

/// Per-grain volume-equivalent diameters from an index image stack.
std::vector<double> image_sizes(const std::vector<IndexImage>& images, const DomainSpec& d, double dz,
                                bool survivors_only) {
  std::map<std::uint32_t, double> volume;
  for (const IndexImage& img : images) {
    const double pixel_area = d.area() / static_cast<double>(img.data.size());
    for (std::uint32_t v : img.data) volume[v] += pixel_area * dz;
  }
  std::set<std::uint32_t> last(images.back().data.begin(), images.back().data.end());
  std::vector<double> sizes;
  for (const auto& [id, v] : volume) {
    if (!survivors_only || last.count(id)) sizes.push_back(equivalent_diameter(v));
  }
  return sizes;
}

int cmd_analyze(const Flags& f, const std::string& dir, const std::string& reference, double alpha, bool all_grains,
                std::ostream& out) {
  const Trajectory t = read_trajectory(dir);
  const QoIReport r = qoi_from_trajectory(t, {.survivors_only = !all_grains});
  std::optional<Comparison> cmp;
  if (!reference.empty()) {
    cmp.emplace();
    const fs::path ref(reference);
    const DomainSpec& dom = t.layers.front().domain();
    std::vector<IndexImage> ref_images;
    std::vector<double> ref_sizes, own_sizes = r.size_sample;
    const bool image_stack = fs::exists(ref / layer_name(0, "gidx"));
    if (image_stack) {
      for (std::size_t l = 0; fs::exists(ref / layer_name(l, "gidx")); ++l) {
        ref_images.push_back(read_index_image(ref / layer_name(l, "gidx"), dom));
      }
    } else {
      const Trajectory rt = read_trajectory(ref);
      const auto [w, h] = pixels(rt.layers.front().domain(), f.resolution);
      ref_images = rasterize(rt, w, h, f.workers);
      ref_sizes = qoi_from_trajectory(rt, {.survivors_only = !all_grains}).size_sample;
    }
    const std::size_t n = std::min(ref_images.size(), t.layers.size());
    std::vector<IndexImage> mine(n);
    cmp->mr.resize(n);
    parallel_for(n, f.workers, [&](std::size_t l) {
      mine[l] = graph_to_image(t.layers[l], ref_images[l].width, ref_images[l].height);
      cmp->mr[l] = misclassification_rate(mine[l], ref_images[l]);
    });
    if (image_stack) {
      // sizes from pixel counts on both sides
      ref_images.resize(n);
      const double ref_dz = n > 1 && ref_images[1].z_l > ref_images[0].z_l ? ref_images[1].z_l - ref_images[0].z_l : t.dz;
      ref_sizes = image_sizes(ref_images, dom, ref_dz, !all_grains);
      own_sizes = image_sizes(mine, dom, t.dz, !all_grains);
    }
    if (!ref_sizes.empty() && !own_sizes.empty()) {
      cmp->ks = ks_statistic(own_sizes, ref_sizes);
      cmp->ks_critical = ks_critical(alpha, ref_sizes.size(), own_sizes.size());
    }
  }
  const fs::path target = f.out.empty() ? fs::path(dir) / "report.json" : fs::path(f.out);
  if (target.has_parent_path()) make_dir(target.parent_path());
  write_text_file(target, report_json(r, cmp));
  write_text_file(fs::path(target).replace_extension(".csv"), curves_csv(r));
  Provenance p("analyze");
  if (fs::exists(fs::path(dir) / "provenance")) p.inputs[dir] = sha256_file(fs::path(dir) / "provenance");
  if (!reference.empty()) p.extra["reference"] = reference;
  p.write(fs::path(target.string() + ".provenance"));

  out << fmt::format("layers {}, grains {} -> {}, n_G {}, misorientation {:.3f} -> {:.3f} deg\n", r.z.size(),
                     t.layers.front().grain_count(), t.layers.back().grain_count(), r.eliminated.back(),
                     r.misorientation.front(), r.misorientation.back());
  if (cmp) {
    double worst = 0.0, mean = 0.0;
    for (double m : cmp->mr) {
      worst = std::max(worst, m);
      mean += m / static_cast<double>(cmp->mr.size());
    }
    out << fmt::format("MR mean {:.4f} max {:.4f} over {} layers\n", mean, worst, cmp->mr.size());
    if (cmp->ks) out << fmt::format("KS {:.4f} (critical {:.4f})\n", *cmp->ks, *cmp->ks_critical);
  }
  out << "report -> " << target.string() << "\n";
  return 0;
}

}  // namespace

std::string layer_name(std::size_t layer, std::string_view ext) { return fmt::format("layer_{:04d}.{}", layer, ext); }

void write_trajectory(const Trajectory& traj, const fs::path& dir) {
  make_dir(dir);
  for (std::size_t l = 0; l < traj.layers.size(); ++l) write_graph_file(traj.layers[l], dir / layer_name(l, "graph"));
  std::string log;
  for (const auto& step : traj.events) log += events_jsonl(step);
  write_text_file(dir / "events.log", log);
}

Trajectory read_trajectory(const fs::path& dir) {
  Trajectory t;
  for (std::size_t l = 0; fs::exists(dir / layer_name(l, "graph")); ++l) {
    t.layers.push_back(read_graph_file(dir / layer_name(l, "graph")));
  }
  if (t.layers.empty()) throw Error(ErrorKind::input, fmt::format("{} holds no {}", dir.string(), layer_name(0, "graph")));
  t.events.resize(t.layers.size() - 1);
  if (fs::exists(dir / "events.log")) {
    for (const EventRecord& e : parse_events_jsonl(read_text_file(dir / "events.log"))) {
      if (e.step < 1) throw Error(ErrorKind::format, fmt::format("event step {} is not positive", e.step));
      const auto s = static_cast<std::size_t>(e.step);
      if (s > t.events.size()) t.events.resize(s);
      t.events[s - 1].push_back(e);
    }
  }
  t.dz = t.layers.size() > 1 ? t.layers[1].z() - t.layers[0].z() : 0.0;
  return t;
}

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Grain microstructure evolution on grain graphs", "graingraph"};
  app.require_subcommand(1);
  Flags f;
  auto common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("--config", f.config, "run configuration (JSON)");
    if (needs_config) c->required();
    sub->add_option("--out", f.out, "output directory or file");
    sub->add_option("--workers", f.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", f.seed, "rng seed (overrides the config)");
    sub->add_option("--resolution", f.resolution, "raster resolution in pixels per micrometre");
  };
  std::string image, dir, reference;
  std::vector<std::string> images;
  double alpha = 0.95;
  bool all_grains = false;

  auto* init = app.add_subcommand("init", "generate a substrate graph");
  common(init, true);
  auto* extract = app.add_subcommand("extract", "extract a grain graph from a GIDX image");
  common(extract, false);
  extract->add_option("image", image, "index image")->required();
  auto* match = app.add_subcommand("match", "build training pairs from consecutive images");
  common(match, false);
  match->add_option("images", images, "index images in layer order")->required();
  auto* evolve = app.add_subcommand("evolve", "roll out a trajectory");
  common(evolve, true);
  auto* reconstruct = app.add_subcommand("reconstruct", "rasterize a trajectory");
  common(reconstruct, false);
  reconstruct->add_option("trajectory", dir, "trajectory directory")->required();
  auto* analyze = app.add_subcommand("analyze", "quantities of interest and comparisons");
  common(analyze, false);
  analyze->add_option("trajectory", dir, "trajectory directory")->required();
  analyze->add_option("--reference", reference, "reference trajectory or GIDX layer directory");
  analyze->add_option("--alpha", alpha, "KS confidence level");
  analyze->add_flag("--all-grains", all_grains, "size sample over every grain, not only survivors");

  std::vector<std::string> argv(args.begin(), args.end());
  std::reverse(argv.begin(), argv.end());
  if (!argv.empty()) argv.pop_back();
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 2;
  }

  try {
    if (*init) return cmd_init(f, out);
    if (*extract) return cmd_extract(f, image, out);
    if (*match) return cmd_match(f, images, out);
    if (*evolve) return cmd_evolve(f, out, err);
    if (*reconstruct) return cmd_reconstruct(f, dir, out);
    if (*analyze) return cmd_analyze(f, dir, reference, alpha, all_grains, out);
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  }
  return 2;
}

}  // namespace graingraph::cli
