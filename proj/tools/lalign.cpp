// Command-line front end: synthesize paired embedding bundles, train the
// alignment maps, transform bundles, evaluate retrieval compatibility, run
// backfill simulations, dump column-angle densities, and self-check.
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "lalign/lalign.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lalign;

namespace {

constexpr const char* kVersion = "0.1.0";

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitCheck = 3;

std::string fnv1a_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("MissingFile", "cannot hash missing file " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (f.read(buf, sizeof(buf)) || f.gcount() > 0) {
    const std::streamsize got = f.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!f) break;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

void add_file_hash(json& inputs, const fs::path& path) {
  inputs[path.string()] = fnv1a_file(path);
}

void add_bundle_hashes(json& inputs, const fs::path& dir) {
  add_file_hash(inputs, dir / "manifest.json");
  add_file_hash(inputs, dir / "vectors.bin");
  if (fs::exists(dir / "labels.txt")) add_file_hash(inputs, dir / "labels.txt");
}

json base_report(const std::string& command, json config, json inputs) {
  return {{"tool", "lalign"},
          {"version", kVersion},
          {"command", command},
          {"config", std::move(config)},
          {"inputs", std::move(inputs)}};
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream f(path);
  if (!f) fail("IoFailure", "cannot write " + path.string());
  f << j.dump(2) << "\n";
}

void emit_report(const json& j, const std::string& out_path) {
  if (!out_path.empty()) write_json(j, out_path);
  std::cout << j.dump(2) << "\n";
}

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const long v = std::stol(cell);
    if (v < 1) fail("InvalidSpec", "top-k values must be >= 1");
    ks.push_back(static_cast<std::size_t>(v));
  }
  if (ks.empty()) fail("InvalidSpec", "empty top-k list");
  return ks;
}

Vector parse_grid(const std::string& s) {
  Vector grid;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, ',')) grid.push_back(std::stod(cell));
  return grid;
}

// Truncates to the map's input width when the bundle is wider; this is how
// both F (full old dim) and B (min-dim space) consume the same bundles.
Matrix apply_map_to_bundle(const Map& map, const EmbeddingSet& set) {
  Matrix in = set.vectors;
  if (set.dim > map.in_dim()) in = truncate_cols(in, map.in_dim());
  if (in.cols() != map.in_dim())
    fail("DimMismatch", "bundle dim " + std::to_string(set.dim) +
                            " below map input dim " +
                            std::to_string(map.in_dim()));
  return map.apply(in);
}

EmbeddingSet load_maybe_mapped(const fs::path& bundle_dir,
                               const std::string& map_path, json& inputs) {
  add_bundle_hashes(inputs, bundle_dir);
  EmbeddingSet set = load_bundle(bundle_dir);
  if (!map_path.empty()) {
    add_file_hash(inputs, map_path);
    const auto map = load_map(map_path);
    set.vectors = apply_map_to_bundle(*map, set);
    set.dim = set.vectors.cols();
    set.model_tag += "+" + map->kind();
  }
  return set;
}

json retrieval_json(const RetrievalReport& rep) {
  json cmc = json::object();
  for (const auto& [k, v] : rep.cmc_top_k) cmc["top" + std::to_string(k)] = v;
  return {{"cmc", cmc},
          {"map", rep.map_score},
          {"excluded_queries", rep.excluded_queries},
          {"query_tag", rep.query_tag},
          {"gallery_tag", rep.gallery_tag}};
}

// ---------------------------------------------------------------- synth ---

struct SynthArgs {
  SynthSpec spec;
  std::string distortion = "orthogonal";
  std::string per_class_spread;
  std::string out_old, out_new, report;
};

int run_synth(const SynthArgs& a) {
  SynthSpec spec = a.spec;
  spec.distortion = distortion_from_string(a.distortion);
  if (!a.per_class_spread.empty()) spec.per_class_spread = parse_grid(a.per_class_spread);
  PairedEmbeddings pair = synth_pair(spec);
  snap_to_f32(pair.old_set);
  snap_to_f32(pair.new_set);
  save_bundle(pair.old_set, a.out_old);
  save_bundle(pair.new_set, a.out_new);

  json config = {{"num_classes", spec.num_classes},
                 {"per_class", spec.per_class},
                 {"dim_old", spec.dim_old},
                 {"dim_new", spec.dim_new},
                 {"class_spread", spec.class_spread},
                 {"per_class_spread", spec.per_class_spread},
                 {"inter_class_separation", spec.inter_class_separation},
                 {"distortion", to_string(spec.distortion)},
                 {"noise_scale", spec.noise_scale},
                 {"affine_condition", spec.affine_condition},
                 {"new_spread_factor", spec.new_spread_factor},
                 {"seed", spec.seed},
                 {"out_old", a.out_old},
                 {"out_new", a.out_new}};
  json rep = base_report("synth", config, json::object());
  rep["count"] = pair.old_set.count;
  emit_report(rep, a.report);
  return 0;
}

// ---------------------------------------------------------------- train ---

struct TrainArgs {
  std::string old_dir, new_dir, config_file;
  std::string out_forward = "forward.map";
  std::string out_backward = "backward.map";
  std::string report;
  // Flag overrides; optionals so the config file keeps unset ones.
  std::optional<double> lr, w1, w2, w3, lambda, alpha, temperature, init_scale;
  std::optional<std::size_t> epochs, batch_size;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> backward_kind, forward_kind;
  std::optional<bool> unlabeled;
};

int run_train(const TrainArgs& a) {
  TrainConfig cfg;
  json inputs = json::object();
  if (!a.config_file.empty()) {
    add_file_hash(inputs, a.config_file);
    std::ifstream f(a.config_file);
    if (!f) fail("MissingFile", "missing config " + a.config_file);
    json j;
    try {
      f >> j;
    } catch (const json::exception& e) {
      fail("InvalidSpec", std::string("bad config json: ") + e.what());
    }
    cfg = TrainConfig::from_json(j);
  }
  if (a.lr) cfg.adam.learning_rate = *a.lr;
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.seed) cfg.seed = *a.seed;
  if (a.w1) cfg.weights.w_forward = *a.w1;
  if (a.w2) cfg.weights.w_backward = *a.w2;
  if (a.w3) cfg.weights.w_contrastive = *a.w3;
  if (a.lambda) cfg.weights.lambda = *a.lambda;
  if (a.alpha) cfg.weights.alpha = *a.alpha;
  if (a.temperature) cfg.weights.temperature = *a.temperature;
  if (a.init_scale) cfg.backward_init_scale = *a.init_scale;
  if (a.backward_kind) cfg.backward_kind = backward_kind_from_string(*a.backward_kind);
  if (a.forward_kind) cfg.forward_kind = forward_kind_from_string(*a.forward_kind);
  if (a.unlabeled) cfg.contrastive_labeled = !*a.unlabeled;
  cfg.validate();

  add_bundle_hashes(inputs, a.old_dir);
  add_bundle_hashes(inputs, a.new_dir);
  PairedEmbeddings pair{load_bundle(a.old_dir), load_bundle(a.new_dir)};
  pair.validate();

  TrainResult result = train(pair, cfg);
  save_map(*result.forward, a.out_forward);
  save_map(*result.backward, a.out_backward);

  json config = cfg.to_json();
  config["old_bundle"] = a.old_dir;
  config["new_bundle"] = a.new_dir;
  config["out_forward"] = a.out_forward;
  config["out_backward"] = a.out_backward;
  json rep = base_report("train", config, inputs);
  rep["train"] = result.report.to_json();
  emit_report(rep, a.report);
  return 0;
}

// ------------------------------------------------------------ transform ---

struct TransformArgs {
  std::string in_dir, map_file, out_dir, model_tag, report;
};

int run_transform(const TransformArgs& a) {
  json inputs = json::object();
  add_bundle_hashes(inputs, a.in_dir);
  add_file_hash(inputs, a.map_file);
  EmbeddingSet set = load_bundle(a.in_dir);
  const auto map = load_map(a.map_file);
  set.vectors = apply_map_to_bundle(*map, set);
  set.dim = set.vectors.cols();
  set.model_tag = a.model_tag.empty() ? set.model_tag + "+" + map->kind()
                                      : a.model_tag;
  snap_to_f32(set);
  save_bundle(set, a.out_dir);

  json config = {{"in", a.in_dir},
                 {"map", a.map_file},
                 {"out", a.out_dir},
                 {"model_tag", set.model_tag}};
  json rep = base_report("transform", config, inputs);
  rep["count"] = set.count;
  rep["dim"] = set.dim;
  emit_report(rep, a.report);
  return 0;
}

// ----------------------------------------------------------------- eval ---

struct EvalArgs {
  std::string query_dir, gallery_dir, query_map, gallery_map;
  std::string verdict_old_dir, verdict_old_map;
  std::string ks = "1,5,10";
  std::string distance = "l2";
  bool leave_one_out = false;
  bool def1 = false;
  std::size_t threads = 1;
  std::string report;
};

int run_eval(const EvalArgs& a) {
  json inputs = json::object();
  const EmbeddingSet query = load_maybe_mapped(a.query_dir, a.query_map, inputs);
  const EmbeddingSet gallery =
      load_maybe_mapped(a.gallery_dir, a.gallery_map, inputs);
  const DistanceKind kind = distance_from_string(a.distance);
  const std::vector<std::size_t> ks = parse_ks(a.ks);

  json config = {{"query", a.query_dir},
                 {"gallery", a.gallery_dir},
                 {"query_map", a.query_map},
                 {"gallery_map", a.gallery_map},
                 {"ks", ks},
                 {"distance", a.distance},
                 {"leave_one_out", a.leave_one_out},
                 {"def1", a.def1},
                 {"threads", a.threads}};
  json rep = base_report("eval", config, inputs);

  rep["retrieval"] = retrieval_json(
      evaluate_retrieval(query, gallery, ks, kind, a.leave_one_out, a.threads));

  if (a.def1) {
    // Gallery plays the old set, query the (adapted) new set; both must be
    // row-aligned views of the same samples.
    const Def1Report d = check_definition1(gallery, query);
    rep["definition_check"] = {
        {"same_pairs", d.same_pairs},
        {"diff_pairs", d.diff_pairs},
        {"same_violations", d.same_violations},
        {"diff_violations", d.diff_violations},
        {"same_violation_fraction", d.same_violation_fraction()},
        {"diff_violation_fraction", d.diff_violation_fraction()}};
  }

  if (!a.verdict_old_dir.empty()) {
    rep["config"]["verdict_old"] = a.verdict_old_dir;
    rep["config"]["verdict_old_map"] = a.verdict_old_map;
    const EmbeddingSet query_old =
        load_maybe_mapped(a.verdict_old_dir, a.verdict_old_map, inputs);
    rep["inputs"] = inputs;
    const CompatibilityVerdict v = compatibility_verdict(
        query, gallery, query_old, kind, a.leave_one_out, a.threads);
    rep["verdict"] = {{"cross_model", retrieval_json(v.cross_model)},
                      {"self_old", retrieval_json(v.self_old)},
                      {"satisfied_cmc_top1", v.satisfied_cmc_top1},
                      {"satisfied_map", v.satisfied_map}};
  }

  emit_report(rep, a.report);
  return 0;
}

// ------------------------------------------------------------- backfill ---

struct BackfillArgs {
  std::string query_dir, old_dir, new_dir;
  std::string query_map, old_map, new_map;
  std::vector<std::string> orderings{"ours_mse"};
  std::string grid;
  std::string distance = "l2";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool leave_one_out = false;
  std::string out_csv_prefix, report;
};

int run_backfill(const BackfillArgs& a) {
  json inputs = json::object();
  const EmbeddingSet query = load_maybe_mapped(a.query_dir, a.query_map, inputs);
  const EmbeddingSet old_adapted =
      load_maybe_mapped(a.old_dir, a.old_map, inputs);
  const EmbeddingSet new_adapted =
      load_maybe_mapped(a.new_dir, a.new_map, inputs);
  const DistanceKind kind = distance_from_string(a.distance);
  const Vector grid = a.grid.empty() ? default_beta_grid() : parse_grid(a.grid);

  json config = {{"query", a.query_dir},     {"old", a.old_dir},
                 {"new", a.new_dir},         {"query_map", a.query_map},
                 {"old_map", a.old_map},     {"new_map", a.new_map},
                 {"orderings", a.orderings}, {"grid", grid},
                 {"distance", a.distance},   {"seed", a.seed},
                 {"threads", a.threads},     {"leave_one_out", a.leave_one_out},
                 {"out_csv_prefix", a.out_csv_prefix}};
  json rep = base_report("backfill", config, inputs);
  rep["curves"] = json::object();

  for (const std::string& kind_name : a.orderings) {
    // Orderings derive from the gallery as it stands before backfilling,
    // i.e. the old-adapted vectors.
    BackfillOrdering ordering;
    if (kind_name == "ours_mse")
      ordering = order_by_class_mean_distance(old_adapted, DistanceKind::l2);
    else if (kind_name == "ours_cosine")
      ordering = order_by_class_mean_distance(old_adapted, DistanceKind::cosine);
    else if (kind_name == "random")
      ordering = random_ordering(new_adapted.count, a.seed);
    else
      fail("InvalidSpec", "unknown ordering kind: " + kind_name);

    const BackfillCurve curve =
        backfill_curve(query, old_adapted, new_adapted, ordering, grid, kind,
                       a.leave_one_out, a.threads);
    json points = json::array();
    for (std::size_t i = 0; i < grid.size(); ++i)
      points.push_back({{"beta", curve.beta_grid[i]},
                        {"cmc_top1", curve.cmc_top1[i]},
                        {"map", curve.map_score[i]}});
    rep["curves"][kind_name] = {{"points", points},
                                {"m_tilde_cmc", curve.m_tilde_cmc},
                                {"m_tilde_map", curve.m_tilde_map}};

    if (!a.out_csv_prefix.empty()) {
      const fs::path csv_path = a.out_csv_prefix + kind_name + ".csv";
      std::ofstream f(csv_path);
      if (!f) fail("IoFailure", "cannot write " + csv_path.string());
      f << "beta,cmc_top1,map\n";
      f.precision(17);
      for (std::size_t i = 0; i < grid.size(); ++i)
        f << curve.beta_grid[i] << "," << curve.cmc_top1[i] << ","
          << curve.map_score[i] << "\n";
    }
  }

  emit_report(rep, a.report);
  return 0;
}

// --------------------------------------------------------------- angles ---

struct AnglesArgs {
  std::string map_file, out_csv, report;
  double bandwidth = 0.0;  // 0 = Silverman
  double grid_start = 0.0, grid_stop = 180.0, grid_step = 1.0;
};

int run_angles(const AnglesArgs& a) {
  json inputs = json::object();
  add_file_hash(inputs, a.map_file);
  const auto map = load_map(a.map_file);
  const auto* affine = dynamic_cast<const AffineMap*>(map.get());
  const auto* orth = dynamic_cast<const OrthogonalMap*>(map.get());
  Matrix w;
  if (affine)
    w = affine->weight();
  else if (orth)
    w = orth->realized();
  else
    fail("InvalidSpec", "angle density needs an affine or orthogonal map");

  Vector grid;
  for (double x = a.grid_start; x <= a.grid_stop + 1e-9; x += a.grid_step)
    grid.push_back(x);
  const Vector angles = column_pair_angles(w);
  const double h = a.bandwidth > 0.0 ? a.bandwidth : silverman_bandwidth(angles);
  const Vector density = column_angle_kde(w, h, grid);

  if (!a.out_csv.empty()) {
    std::ofstream f(a.out_csv);
    if (!f) fail("IoFailure", "cannot write " + a.out_csv);
    f << "angle_deg,density\n";
    f.precision(17);
    for (std::size_t i = 0; i < grid.size(); ++i)
      f << grid[i] << "," << density[i] << "\n";
  }

  std::size_t mode = 0;
  for (std::size_t i = 1; i < density.size(); ++i)
    if (density[i] > density[mode]) mode = i;

  json config = {{"map", a.map_file},
                 {"bandwidth", h},
                 {"grid_start", a.grid_start},
                 {"grid_stop", a.grid_stop},
                 {"grid_step", a.grid_step},
                 {"out_csv", a.out_csv}};
  json rep = base_report("angles", config, inputs);
  rep["mode_deg"] = grid[mode];
  rep["num_angles"] = angles.size();
  emit_report(rep, a.report);
  return 0;
}

// ------------------------------------------------------------- diagnose ---

struct DiagnoseArgs {
  std::uint64_t seed = 0;
  std::string report;
};

int run_diagnose(const DiagnoseArgs& a) {
  json checks = json::array();
  bool ok = true;
  const auto record = [&](const std::string& name, bool pass, double value) {
    checks.push_back({{"name", name}, {"pass", pass}, {"value", value}});
    std::cout << (pass ? "PASS" : "FAIL") << " " << name << " (" << value
              << ")\n";
    ok = ok && pass;
  };

  auto rng = make_engine(a.seed, 42);

  {  // expm of skew stays orthogonal
    double worst = 0.0;
    for (std::size_t n : {4u, 16u, 64u}) {
      const Matrix b = expm(random_skew(n, rng, 5.0));
      worst = std::max(worst, frobenius_norm(matmul(transpose(b), b) -
                                             Matrix::identity(n)));
    }
    record("expm_orthogonality", worst <= 1e-10, worst);
  }
  {  // Frechet derivative vs finite differences
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const Matrix p = random_normal(5, 5, rng, 0.7);
      const Matrix e = random_normal(5, 5, rng, 0.7);
      const Matrix num =
          (expm(p + 1e-6 * e) - expm(p - 1e-6 * e)) * (1.0 / 2e-6);
      const Matrix ana = expm_frechet(p, e);
      worst = std::max(worst, frobenius_norm(ana - num) /
                                  std::max(frobenius_norm(ana), 1e-8));
    }
    record("expm_frechet_fd", worst <= 1e-5, worst);
  }
  {  // total-loss gradient through both map families
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
      AffineMap f = AffineMap::random_init(5, 4, rng);
      const bool orth = t % 2 == 0;
      std::unique_ptr<Map> b;
      if (orth)
        b = std::make_unique<OrthogonalMap>(OrthogonalMap::random_init(4, rng));
      else
        b = std::make_unique<AffineMap>(AffineMap::random_init(4, 4, rng));
      const Matrix h_old = random_normal(6, 5, rng);
      const Matrix h_old_trunc = truncate_cols(h_old, 4);
      const Matrix h_new = random_normal(6, 4, rng);
      const std::vector<long> labels{0, 0, 0, 1, 1, 1};
      LossWeights w;
      w.lambda = orth ? 0.0 : 2.0;
      const LossBatch batch{h_old, h_old_trunc, h_new, labels};
      const std::size_t nf = f.param_count();
      Vector joint(nf + b->param_count());
      f.get_params(std::span<double>(joint).first(nf));
      b->get_params(std::span<double>(joint).subspan(nf));
      worst = std::max(
          worst,
          grad_check(
              [&](std::span<const double> p, std::span<double> g) {
                AffineMap fc = f;
                auto bc = b->clone();
                fc.set_params(p.first(nf));
                bc->set_params(p.subspan(nf));
                if (g.empty()) return loss_total(fc, *bc, batch, w, {}, {}).total;
                return loss_total(fc, *bc, batch, w, g.first(nf), g.subspan(nf))
                    .total;
              },
              joint));
    }
    record("loss_gradients_fd", worst <= 1e-5, worst);
  }
  {  // retrieval metrics vs rank-counting oracle
    double worst = 0.0;
    for (int t = 0; t < 25; ++t) {
      EmbeddingSet gallery;
      gallery.dim = 3;
      gallery.count = 12;
      gallery.vectors = random_normal(12, 3, rng);
      for (std::size_t i = 0; i < 12; ++i)
        gallery.labels.push_back(static_cast<long>(i % 3));
      EmbeddingSet query = gallery;
      query.vectors = random_normal(12, 3, rng);
      // oracle: rank = count of strictly closer items (ties by index)
      double o_hits = 0.0, o_ap = 0.0;
      for (std::size_t qi = 0; qi < query.count; ++qi) {
        Vector dist(gallery.count);
        for (std::size_t gi = 0; gi < gallery.count; ++gi)
          dist[gi] = norm2([&] {
            Vector d(3);
            for (std::size_t j = 0; j < 3; ++j)
              d[j] = query.vectors(qi, j) - gallery.vectors(gi, j);
            return d;
          }());
        std::vector<std::size_t> rel_ranks;
        bool hit = false;
        for (std::size_t gi = 0; gi < gallery.count; ++gi) {
          if (gallery.labels[gi] != query.labels[qi]) continue;
          std::size_t r = 0;
          for (std::size_t other = 0; other < gallery.count; ++other)
            if (other != gi &&
                (dist[other] < dist[gi] ||
                 (dist[other] == dist[gi] && other < gi)))
              ++r;
          rel_ranks.push_back(r);
          if (r < 1) hit = true;
        }
        if (hit) o_hits += 1.0;
        std::sort(rel_ranks.begin(), rel_ranks.end());
        double ap = 0.0;
        for (std::size_t i = 0; i < rel_ranks.size(); ++i)
          ap += double(i + 1) / double(rel_ranks[i] + 1);
        o_ap += ap / double(rel_ranks.size());
      }
      o_hits /= double(query.count);
      o_ap /= double(query.count);
      worst = std::max(worst, std::abs(cmc(query, gallery, 1) - o_hits));
      worst =
          std::max(worst, std::abs(mean_average_precision(query, gallery) - o_ap));
    }
    record("retrieval_oracle", worst <= 1e-12, worst);
  }
  {  // orthogonality invariant through a short training run
    SynthSpec spec;
    spec.num_classes = 3;
    spec.per_class = 6;
    spec.dim_old = 5;
    spec.dim_new = 5;
    spec.seed = a.seed;
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.seed = a.seed;
    const TrainResult result = train(synth_pair(spec), cfg);
    record("training_orthogonality",
           result.report.final_orthogonality_residual <= 1e-8,
           result.report.final_orthogonality_residual);
  }

  json rep = base_report("diagnose", {{"seed", a.seed}}, json::object());
  rep["checks"] = checks;
  rep["all_passed"] = ok;
  if (!a.report.empty()) write_json(rep, a.report);
  return ok ? 0 : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-space alignment toolkit"};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "generate a paired synthetic bundle");
  synth_cmd->add_option("--classes", synth_args.spec.num_classes);
  synth_cmd->add_option("--per-class", synth_args.spec.per_class);
  synth_cmd->add_option("--dim-old", synth_args.spec.dim_old);
  synth_cmd->add_option("--dim-new", synth_args.spec.dim_new);
  synth_cmd->add_option("--spread", synth_args.spec.class_spread);
  synth_cmd->add_option("--per-class-spread", synth_args.per_class_spread,
                        "comma list, one per class");
  synth_cmd->add_option("--separation", synth_args.spec.inter_class_separation);
  synth_cmd->add_option("--distortion", synth_args.distortion,
                        "orthogonal | affine | affine+noise");
  synth_cmd->add_option("--noise", synth_args.spec.noise_scale);
  synth_cmd->add_option("--condition", synth_args.spec.affine_condition);
  synth_cmd->add_option("--new-spread-factor", synth_args.spec.new_spread_factor);
  synth_cmd->add_option("--seed", synth_args.spec.seed);
  synth_cmd->add_option("--out-old", synth_args.out_old)->required();
  synth_cmd->add_option("--out-new", synth_args.out_new)->required();
  synth_cmd->add_option("--report", synth_args.report);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train forward/backward maps");
  train_cmd->add_option("--old", train_args.old_dir)->required();
  train_cmd->add_option("--new", train_args.new_dir)->required();
  train_cmd->add_option("--config", train_args.config_file);
  train_cmd->add_option("--lr", train_args.lr);
  train_cmd->add_option("--epochs", train_args.epochs);
  train_cmd->add_option("--batch-size", train_args.batch_size);
  train_cmd->add_option("--seed", train_args.seed);
  train_cmd->add_option("--w1", train_args.w1, "forward loss weight");
  train_cmd->add_option("--w2", train_args.w2, "backward loss weight");
  train_cmd->add_option("--w3", train_args.w3, "contrastive loss weight");
  train_cmd->add_option("--lambda", train_args.lambda);
  train_cmd->add_option("--alpha", train_args.alpha);
  train_cmd->add_option("--temperature", train_args.temperature);
  train_cmd->add_option("--init-scale", train_args.init_scale,
                        "affine backward weight init scale");
  train_cmd->add_option("--backward", train_args.backward_kind,
                        "orthogonal | lambda_affine");
  train_cmd->add_option("--forward", train_args.forward_kind, "affine | mlp");
  train_cmd->add_flag("--unlabeled", [&](std::int64_t) { train_args.unlabeled = true; },
                      "row-aligned contrastive positives instead of labels");
  train_cmd->add_option("--out-forward", train_args.out_forward);
  train_cmd->add_option("--out-backward", train_args.out_backward);
  train_cmd->add_option("--report", train_args.report);

  TransformArgs transform_args;
  auto* transform_cmd =
      app.add_subcommand("transform", "apply a map file to a bundle");
  transform_cmd->add_option("--in", transform_args.in_dir)->required();
  transform_cmd->add_option("--map", transform_args.map_file)->required();
  transform_cmd->add_option("--out", transform_args.out_dir)->required();
  transform_cmd->add_option("--model-tag", transform_args.model_tag);
  transform_cmd->add_option("--report", transform_args.report);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "retrieval / compatibility metrics");
  eval_cmd->add_option("--query", eval_args.query_dir)->required();
  eval_cmd->add_option("--gallery", eval_args.gallery_dir)->required();
  eval_cmd->add_option("--query-map", eval_args.query_map);
  eval_cmd->add_option("--gallery-map", eval_args.gallery_map);
  eval_cmd->add_option("--verdict-old", eval_args.verdict_old_dir,
                       "old query bundle for the compatibility verdict");
  eval_cmd->add_option("--verdict-old-map", eval_args.verdict_old_map);
  eval_cmd->add_option("--ks", eval_args.ks, "comma list of CMC depths");
  eval_cmd->add_option("--distance", eval_args.distance, "l2 | cosine");
  eval_cmd->add_flag("--leave-one-out", eval_args.leave_one_out);
  eval_cmd->add_flag("--def1", eval_args.def1,
                     "pairwise compatibility-definition violation counts");
  eval_cmd->add_option("--threads", eval_args.threads);
  eval_cmd->add_option("--report", eval_args.report);

  BackfillArgs backfill_args;
  auto* backfill_cmd = app.add_subcommand("backfill", "partial-backfill curves");
  backfill_cmd->add_option("--query", backfill_args.query_dir)->required();
  backfill_cmd->add_option("--old", backfill_args.old_dir)->required();
  backfill_cmd->add_option("--new", backfill_args.new_dir)->required();
  backfill_cmd->add_option("--query-map", backfill_args.query_map);
  backfill_cmd->add_option("--old-map", backfill_args.old_map);
  backfill_cmd->add_option("--new-map", backfill_args.new_map);
  backfill_cmd->add_option("--ordering", backfill_args.orderings,
                           "ours_mse | ours_cosine | random (repeatable)");
  backfill_cmd->add_option("--grid", backfill_args.grid, "comma list of betas");
  backfill_cmd->add_option("--distance", backfill_args.distance);
  backfill_cmd->add_option("--seed", backfill_args.seed);
  backfill_cmd->add_option("--threads", backfill_args.threads);
  backfill_cmd->add_flag("--leave-one-out", backfill_args.leave_one_out);
  backfill_cmd->add_option("--out-csv-prefix", backfill_args.out_csv_prefix);
  backfill_cmd->add_option("--report", backfill_args.report);

  AnglesArgs angles_args;
  auto* angles_cmd =
      app.add_subcommand("angles", "column-pair angle density of a map");
  angles_cmd->add_option("--map", angles_args.map_file)->required();
  angles_cmd->add_option("--bandwidth", angles_args.bandwidth,
                         "0 selects Silverman's rule");
  angles_cmd->add_option("--grid-start", angles_args.grid_start);
  angles_cmd->add_option("--grid-stop", angles_args.grid_stop);
  angles_cmd->add_option("--grid-step", angles_args.grid_step);
  angles_cmd->add_option("--out-csv", angles_args.out_csv);
  angles_cmd->add_option("--report", angles_args.report);

  DiagnoseArgs diagnose_args;
  auto* diagnose_cmd = app.add_subcommand("diagnose", "run self-checks");
  diagnose_cmd->add_option("--seed", diagnose_args.seed);
  diagnose_cmd->add_option("--report", diagnose_args.report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (synth_cmd->parsed()) return run_synth(synth_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (transform_cmd->parsed()) return run_transform(transform_args);
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (backfill_cmd->parsed()) return run_backfill(backfill_args);
    if (angles_cmd->parsed()) return run_angles(angles_args);
    if (diagnose_cmd->parsed()) return run_diagnose(diagnose_args);
  } catch (const Error& e) {
    const json err = {{"error", e.code()}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return e.code() == "InvalidSpec" ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    const json err = {{"error", "Internal"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
