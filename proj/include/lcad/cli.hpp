#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lcad/assess.hpp"
#include "lcad/enhance.hpp"
#include "lcad/image_io.hpp"
#include "lcad/massdetect.hpp"
#include "lcad/mcdetect.hpp"
#include "lcad/model_io.hpp"
#include "lcad/phantom.hpp"
#include "lcad/segment.hpp"

namespace lcad::cli {

inline constexpr const char* kToolVersion = "1.0.0";

namespace fs = std::filesystem;
using nlohmann::json;

namespace detail {

inline std::string fnv1a64(const std::vector<unsigned char>& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char b : bytes) h = (h ^ b) * 0x100000001b3ull;
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << h;
  return s.str();
}

inline json input_record(const fs::path& path) {
  return {{"path", path.string()}, {"fnv1a64", fnv1a64(lcad::detail::read_all(path))}};
}

/// Inputs, configuration, seed and tool version, written to `<output>.run.json`.
struct RunManifest {
  std::string subcommand;
  json inputs = json::array();
  json config = json::object();
  std::uint64_t seed = 0;

  void write_beside(const fs::path& output) const {
    const json doc{{"tool", "lcad"}, {"version", kToolVersion}, {"subcommand", subcommand},
                   {"inputs", inputs}, {"config", config},      {"seed", seed}};
    fs::path p = output;
    p += ".run.json";
    write_text(p, doc.dump(2) + "\n");
  }
};

inline json to_json(const EnhanceConfig& c) {
  return {{"window", c.window}, {"lambda", c.lambda}, {"height", c.target_height}, {"target", to_string(c.target)}};
}

inline json to_json(const SegmentationConfig& c) {
  return {{"stop_fraction", c.stop_fraction}, {"max_iterations", c.max_iterations}};
}

inline json to_json(const MassConfig& c) {
  return {{"w1", c.patch_w1},   {"centroids", c.centroids_r},  {"components", c.pca_C},
          {"knn", c.knn_K},     {"smooth", c.smooth_side},     {"windows", c.mcs_windows}};
}

inline json to_json(const McConfig& c) {
  return {{"w2", c.inner_w2},
          {"th", c.threshold_th},
          {"height", c.target_height},
          {"merge_mm", c.merge_distance_mm},
          {"min_foci", c.min_foci_per_cluster}};
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::istringstream in(text);
  for (std::string tok; std::getline(in, tok, ',');) {
    std::istringstream ts(tok);
    T v;
    if (!(ts >> v) || !(ts >> std::ws).eof()) throw CLI::ValidationError(what, "bad list entry '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError(what, "empty list");
  return out;
}

class Log {
 public:
  explicit Log(std::ostream& err) : err_(err) {}
  template <typename... Kv>
  void operator()(const std::string& event, const Kv&... kv) const {
    err_ << "lcad event=" << event;
    emit(kv...);
    err_ << '\n';
  }

 private:
  void emit() const {}
  template <typename K, typename V, typename... Rest>
  void emit(const K& k, const V& v, const Rest&... rest) const {
    err_ << ' ' << k << '=' << v;
    emit(rest...);
  }
  std::ostream& err_;
};

inline fs::path manifest_path(const fs::path& data) { return fs::is_directory(data) ? data / "manifest.tsv" : data; }

inline GrayImage score_to_image(const ScoreImage& s) {
  GrayImage img(s.width, s.height, 8);
  for (std::size_t i = 0; i < s.scores.size(); ++i)
    img.pixels[i] = static_cast<std::uint16_t>(std::lround(std::clamp(s.scores[i], 0.0, 1.0) * 255.0));
  return img;
}

}  // namespace detail

/// Parameters shared by every subcommand, plus the per-module configurations.
struct RunConfig {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  EnhanceConfig enhance;
  SegmentationConfig segmentation;
  MassConfig mass;
  McConfig mc;
};

namespace detail {

inline void add_enhance_flags(CLI::App* sub, EnhanceConfig& c, std::string& target) {
  sub->add_option("--window", c.window, "LHS window side W (odd)")->capture_default_str();
  sub->add_option("--lambda", c.lambda, "exponential target rate")->capture_default_str();
  sub->add_option("--height", c.target_height, "rescale height before enhancement")->capture_default_str();
  sub->add_option("--target", target, "target histogram family")
      ->check(CLI::IsMember({"exp", "uniform"}))
      ->capture_default_str();
}

inline void add_segment_flags(CLI::App* sub, SegmentationConfig& c) {
  sub->add_option("--seg-stop", c.stop_fraction, "QDA stop fraction")->capture_default_str();
  sub->add_option("--seg-max-iter", c.max_iterations, "QDA iteration cap")->capture_default_str();
}

}  // namespace detail

/// Entry point behind the `lcad` executable. Exit codes: 0 success, 1 usage error,
/// 2 data error.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"lcad: mammography CAD pipeline (enhancement, mass and microcalcification detection, FROC)"};
  app.name("lcad");
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "key=value config file; [subcommand] sections apply to that subcommand");
  app.failure_message(CLI::FailureMessage::help);

  RunConfig rc;
  const detail::Log log(err);
  app.add_option("--seed", rc.seed, "random seed")->capture_default_str();
  app.add_option("--threads", rc.threads, "worker threads (0: LCAD_THREADS or hardware)");

  std::string target = "exp";

  // phantom
  auto* phantom = app.add_subcommand("phantom", "generate a synthetic corpus");
  fs::path phantom_out;
  int n_pos = 10, n_norm = 10;
  std::string difficulty = "easy";
  CorpusOptions corpus;
  phantom->add_option("--out", phantom_out, "output directory")->required();
  phantom->add_option("--positive", n_pos, "positive cases")->check(CLI::NonNegativeNumber)->capture_default_str();
  phantom->add_option("--normal", n_norm, "normal cases")->check(CLI::NonNegativeNumber)->capture_default_str();
  phantom->add_option("--difficulty", difficulty, "easy or hard")
      ->check(CLI::IsMember({"easy", "hard"}))
      ->capture_default_str();
  phantom->add_option("--height", corpus.height, "image height in pixels")->capture_default_str();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a mass detector from a corpus");
  fs::path train_data, train_out;
  std::string windows;
  train_cmd->add_option("--data", train_data, "corpus directory or manifest")->required();
  train_cmd->add_option("--out", train_out, "model file (.lcm)")->required();
  train_cmd->add_option("--windows", windows, "comma-separated patch windows: train one model per window (MCS)");
  train_cmd->add_option("--w1", rc.mass.patch_w1, "patch window w1")->capture_default_str();
  train_cmd->add_option("--centroids", rc.mass.centroids_r, "k-means centroids per region and image")
      ->capture_default_str();
  train_cmd->add_option("--components", rc.mass.pca_C, "principal components C")->capture_default_str();
  train_cmd->add_option("--knn", rc.mass.knn_K, "neighbors K")->capture_default_str();
  train_cmd->add_option("--smooth", rc.mass.smooth_side, "score smoothing side")->capture_default_str();
  detail::add_enhance_flags(train_cmd, rc.enhance, target);
  detail::add_segment_flags(train_cmd, rc.segmentation);

  // detect
  auto* detect = app.add_subcommand("detect", "score an image with a trained mass model");
  fs::path model_path, detect_in, score_out, markers_out;
  double marker_threshold = 0.0;
  bool use_mcs = false;
  int detect_w1 = 0;
  detect->add_option("--model", model_path, "model file")->required();
  detect->add_option("--input", detect_in, "input image (PGM/PNG)")->required();
  detect->add_option("--score-out", score_out, "score image output (8-bit, enhanced frame)")->required();
  detect->add_option("--markers-out", markers_out, "marker list output")->required();
  detect->add_option("--threshold", marker_threshold, "minimum marker score")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  detect->add_flag("--mcs", use_mcs, "average every model in the file");
  detect->add_option("--w1", detect_w1, "pick the model with this patch window (default: first)");
  detail::add_segment_flags(detect, rc.segmentation);

  // detect-mc
  auto* detect_mc = app.add_subcommand("detect-mc", "detect microcalcification foci and clusters");
  fs::path mc_in, foci_out;
  detect_mc->add_option("--input", mc_in, "input image")->required();
  detect_mc->add_option("--foci-out", foci_out, "cluster marker output")->required();
  detect_mc->add_option("--w2", rc.mc.inner_w2, "inner filter size")->capture_default_str();
  detect_mc->add_option("--th", rc.mc.threshold_th, "response threshold")->capture_default_str();
  detect_mc->add_option("--min-foci", rc.mc.min_foci_per_cluster, "clusters need more foci than this")
      ->capture_default_str();
  detect_mc->add_option("--height", rc.mc.target_height, "rescale height")->capture_default_str();
  detect_mc->add_option("--merge-mm", rc.mc.merge_distance_mm, "cluster merge distance in mm")
      ->capture_default_str();
  detect_mc->add_option("--window", rc.enhance.window, "LHS window side W (odd)")->capture_default_str();
  detect_mc->add_option("--lambda", rc.enhance.lambda, "exponential target rate")->capture_default_str();
  detail::add_segment_flags(detect_mc, rc.segmentation);

  // enhance
  auto* enhance = app.add_subcommand("enhance", "local histogram specification");
  fs::path enh_in, enh_out;
  enhance->add_option("--input", enh_in, "input image")->required();
  enhance->add_option("--output", enh_out, "enhanced 8-bit image")->required();
  detail::add_enhance_flags(enhance, rc.enhance, target);
  detail::add_segment_flags(enhance, rc.segmentation);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "FROC table from marker files");
  fs::path eval_manifest, markers_dir, eval_out;
  std::string criterion = "per-image", thresholds_text, kind_text = "any";
  evaluate->add_option("--dataset", eval_manifest, "corpus manifest (or directory)")->required();
  evaluate->add_option("--markers", markers_dir, "directory of <view>.txt marker files")->required();
  evaluate->add_option("--criterion", criterion, "TPF unit")
      ->check(CLI::IsMember({"per-case", "per-side", "per-image", "per-label"}))
      ->capture_default_str();
  evaluate->add_option("--thresholds", thresholds_text, "comma-separated marker thresholds")->required();
  evaluate->add_option("--kind", kind_text, "lesion kind that counts as positive")
      ->check(CLI::IsMember({"mass", "microcalc", "any"}))
      ->capture_default_str();
  evaluate->add_option("--out", eval_out, "write the table here instead of stdout");

  std::vector<double> thresholds;
  try {
    std::vector<std::string> args;
    for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
    app.parse(args);
    rc.enhance.target = parse_target_family(target);
    rc.segmentation.validate();
    if (!windows.empty()) rc.mass.mcs_windows = detail::parse_list<int>(windows, "--windows");
    if (train_cmd->parsed()) rc.mass.validate();
    if (train_cmd->parsed() || enhance->parsed() || detect_mc->parsed()) rc.enhance.validate();
    if (detect_mc->parsed()) rc.mc.validate();
    if (evaluate->parsed()) {
      thresholds = detail::parse_list<double>(thresholds_text, "--thresholds");
      std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  } catch (const Error& e) {
    err << "lcad: usage error: " << e.what() << '\n';
    return 1;
  }

  try {
    const unsigned threads = rc.threads;

    if (phantom->parsed()) {
      const Difficulty d = parse_difficulty(difficulty);
      log("phantom.start", "positive", n_pos, "normal", n_norm, "difficulty", difficulty, "seed", rc.seed);
      const Manifest m = make_corpus(phantom_out, n_pos, n_norm, d, rc.seed, corpus, threads);
      detail::RunManifest run{"phantom", json::array(),
                              {{"positive", n_pos}, {"normal", n_norm}, {"difficulty", difficulty},
                               {"height", corpus.height}},
                              rc.seed};
      run.write_beside(phantom_out / "manifest.tsv");
      log("phantom.done", "views", m.records.size());
      return 0;
    }

    if (train_cmd->parsed()) {
      const fs::path mpath = detail::manifest_path(train_data);
      const Manifest m = load_manifest(mpath);
      std::vector<ManifestRecord> chosen;
      for (const auto& r : m.records)
        if (load_annotations(m.root / r.annotation).has(LesionKind::Mass)) chosen.push_back(r);
      if (chosen.empty()) throw Error("no training views with mass annotations in " + mpath.string());
      std::vector<TrainingImage> set(chosen.size());
      parallel_for(
          chosen.size(),
          [&](std::size_t i) {
            set[i] = {load_image(m.root / chosen[i].image), load_annotations(m.root / chosen[i].annotation)};
          },
          threads);
      log("train.start", "images", set.size(), "mcs", !windows.empty(), "seed", rc.seed);
      std::vector<TrainedMassModel> models;
      if (windows.empty())
        models.push_back(train(set, rc.mass, rc.seed, rc.enhance, rc.segmentation, threads));
      else
        models = train_mcs(set, rc.mass, rc.seed, rc.enhance, rc.segmentation, threads);
      write_bytes(train_out, encode_models(models));
      detail::RunManifest run{"train", json::array(), {{"enhance", detail::to_json(rc.enhance)},
                                                       {"segmentation", detail::to_json(rc.segmentation)},
                                                       {"mass", detail::to_json(rc.mass)},
                                                       {"mcs", !windows.empty()}},
                              rc.seed};
      run.inputs.push_back(detail::input_record(mpath));
      for (const auto& r : chosen) {
        run.inputs.push_back(detail::input_record(m.root / r.image));
        run.inputs.push_back(detail::input_record(m.root / r.annotation));
      }
      run.write_beside(train_out);
      log("train.done", "models", models.size(), "out", train_out.string());
      return 0;
    }

    if (detect->parsed()) {
      const auto models = load_models(model_path);
      const GrayImage img = load_image(detect_in);
      ScoreImage score;
      if (use_mcs) {
        score = score_image_mcs(img, models, models[0].config, rc.segmentation, threads);
      } else {
        auto it = models.begin();
        if (detect_w1 != 0) {
          it = std::find_if(models.begin(), models.end(), [&](const auto& m) { return m.patch_w1() == detect_w1; });
          if (it == models.end()) throw Error("model file has no model with w1=" + std::to_string(detect_w1));
        }
        score = score_image(img, *it, it->config, rc.segmentation, threads);
      }
      const MarkerSet markers = find_markers(score, marker_threshold);
      save_image(detail::score_to_image(score), score_out);
      write_text(markers_out, format_markers(markers));
      detail::RunManifest run{"detect", json::array(),
                              {{"threshold", marker_threshold},
                               {"mcs", use_mcs},
                               {"w1", detect_w1},
                               {"segmentation", detail::to_json(rc.segmentation)}},
                              rc.seed};
      run.inputs.push_back(detail::input_record(model_path));
      run.inputs.push_back(detail::input_record(detect_in));
      run.write_beside(score_out);
      run.write_beside(markers_out);
      log("detect.done", "markers", markers.markers.size());
      return 0;
    }

    if (detect_mc->parsed()) {
      const GrayImage img = load_image(mc_in);
      const FociSet foci = detect_foci(img, rc.mc, rc.enhance, rc.segmentation, threads);
      const MarkerSet markers = cluster_markers(foci, rc.mc.min_foci_per_cluster);
      write_text(foci_out, format_markers(markers));
      detail::RunManifest run{"detect-mc", json::array(),
                              {{"mc", detail::to_json(rc.mc)},
                               {"enhance", detail::to_json(rc.enhance)},
                               {"segmentation", detail::to_json(rc.segmentation)}},
                              rc.seed};
      run.inputs.push_back(detail::input_record(mc_in));
      run.write_beside(foci_out);
      log("detect-mc.done", "foci", foci.foci.size(), "clusters", markers.markers.size());
      return 0;
    }

    if (enhance->parsed()) {
      const EnhancedImage e = enhance_image(load_image(enh_in), rc.enhance, rc.segmentation, threads);
      save_image(e.image, enh_out);
      detail::RunManifest run{"enhance", json::array(),
                              {{"enhance", detail::to_json(rc.enhance)},
                               {"segmentation", detail::to_json(rc.segmentation)}},
                              rc.seed};
      run.inputs.push_back(detail::input_record(enh_in));
      run.write_beside(enh_out);
      log("enhance.done", "width", e.image.width, "height", e.image.height);
      return 0;
    }

    if (evaluate->parsed()) {
      const fs::path mpath = detail::manifest_path(eval_manifest);
      const Manifest m = load_manifest(mpath);
      const Dataset data = load_dataset(m);
      Detections all;
      for (const auto& r : m.records) {
        const fs::path f = markers_dir / (r.view_id() + ".txt");
        if (!fs::exists(f)) throw Error("missing marker file: " + f.string());
        all[r.view_id()] = load_markers(f);
      }
      std::optional<LesionKind> kind;
      if (kind_text != "any") kind = parse_lesion_kind(kind_text);
      const auto points = froc_sweep(
          data.cases, data.normal_views, [&](double t) { return threshold_detections(all, t); }, thresholds,
          parse_criterion(criterion), kind);
      std::ostringstream table;
      table << "threshold\ttpf\tfm_per_image\n" << std::setprecision(10);
      for (const auto& p : points) table << p.threshold << '\t' << p.tpf << '\t' << p.fm_per_image << '\n';
      if (eval_out.empty()) {
        out << table.str();
      } else {
        write_text(eval_out, table.str());
        detail::RunManifest run{"evaluate", json::array(),
                                {{"criterion", criterion}, {"thresholds", thresholds}, {"kind", kind_text}},
                                rc.seed};
        run.inputs.push_back(detail::input_record(mpath));
        run.write_beside(eval_out);
      }
      return 0;
    }
  } catch (const std::exception& e) {
    err << "lcad: error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"lcad"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace lcad::cli
