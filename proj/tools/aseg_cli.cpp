// aseg command-line tool.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "aseg/aseg.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// --config plus one override flag per config key.
struct ConfigArgs {
  std::string config_path;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value config file");
    for (const auto& key : aseg::config_keys()) {
      cmd->add_option("--" + key, overrides[key], "override config key " + key);
    }
  }

  /// File (or `fallback` when no --config is given), then flag overrides.
  aseg::RunConfig resolve(const CLI::App* cmd, const std::optional<fs::path>& fallback = {}) const {
    aseg::RunConfig cfg;
    if (!config_path.empty()) {
      cfg = aseg::load_config(config_path);
    } else if (fallback && fs::exists(*fallback)) {
      cfg = aseg::load_config(fallback->string());
    }
    for (const auto& [key, value] : overrides) {
      if (cmd->count("--" + key)) aseg::set_config_value(cfg, key, value);
    }
    cfg.validate();
    return cfg;
  }
};

/// Image + label from PNG files, or a synthetic scene by index.
struct SampleArgs {
  std::string image, label;
  int index = -1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--image", image, "RGB PNG");
    cmd->add_option("--label", label, "label PNG (class ids as gray values)");
    cmd->add_option("--index", index, "synthetic scene index (instead of --image/--label)");
  }

  aseg::Sample load(const aseg::RunConfig& cfg) const {
    if (index >= 0) {
      if (!image.empty()) throw UsageError("--index and --image are exclusive");
      aseg::SyntheticSceneConfig sc;
      sc.num_classes = cfg.num_classes;
      sc.height = cfg.image_height;
      sc.width = cfg.image_width;
      sc.seed = cfg.seed;
      return aseg::generate_scene(sc, static_cast<std::uint64_t>(index));
    }
    if (image.empty() || label.empty()) throw UsageError("need --image and --label, or --index");
    aseg::Sample s;
    s.image = aseg::kernels::resize_bilinear(aseg::read_png_rgb(image), cfg.image_height, cfg.image_width);
    s.label = aseg::kernels::resize_nearest(aseg::read_png_gray(label), cfg.image_height, cfg.image_width);
    for (auto v : s.label.values()) {
      if (v >= cfg.num_classes) throw aseg::DatasetError("label class " + std::to_string(v) + " >= num_classes");
    }
    return s;
  }
};

std::optional<fs::path> sibling_config(const std::string& checkpoint) {
  if (checkpoint.empty()) return std::nullopt;
  return fs::path(checkpoint).parent_path() / "config.txt";
}

int cmd_train(const CLI::App* cmd, const ConfigArgs& args) {
  const aseg::RunConfig cfg = args.resolve(cmd);
  std::printf("training %s agent, %d epochs, out_dir %s\n", cfg.agent.c_str(), cfg.epochs,
              cfg.out_dir.c_str());
  const aseg::History h = aseg::train(cfg, [](const aseg::EpochRecord& e) {
    std::printf("epoch %3d  train_objective %.5f  train_acc %.4f  val_acc %.4f  val_miou %.4f\n",
                e.epoch, e.train_objective, e.train_accuracy, e.val_accuracy, e.val_miou);
    std::fflush(stdout);
  });
  std::printf("best epoch %d  val_acc %.4f\n", h.best_epoch, h.best_val_accuracy);
  return 0;
}

int cmd_evaluate(const CLI::App* cmd, const ConfigArgs& args, const std::string& checkpoint,
                 const std::string& report_path) {
  const aseg::RunConfig cfg = args.resolve(cmd, sibling_config(checkpoint));
  const aseg::BatchMetrics m = aseg::evaluate_checkpoint(checkpoint, cfg);
  const aseg::AgentConfig agent = cfg.agent_config();
  const int area = cfg.image_height * cfg.image_width;

  std::printf("agent %s  policy %s  images %zu\n", cfg.agent.c_str(), cfg.policy.c_str(), m.images);
  std::printf("%-6s %-10s %-10s\n", "t", "accuracy", "budget");
  const long ov = aseg::overview_charge(agent, cfg.arch());
  const int per = aseg::analytic_pixel_count(agent.retina);
  std::printf("%-6d %-10.4f %.2f%%\n", 0, m.initial_accuracy, 100.0 * ov / area);
  for (std::size_t t = 0; t < m.accuracy_curve.size(); ++t) {
    const long px = ov + static_cast<long>(t + 1) * per;
    std::printf("%-6zu %-10.4f %.2f%%\n", t + 1, m.accuracy_curve[t], 100.0 * px / area);
  }
  std::printf("final accuracy %.4f  mean IoU %.4f\n", m.final_accuracy, m.mean_iou);
  for (std::size_t k = 0; k < m.class_iou.size(); ++k) {
    const int cls = static_cast<int>(k);
    if (m.class_iou[k]) {
      std::printf("  %-14s %.4f\n", aseg::scene_class_name(cls), *m.class_iou[k]);
    } else {
      std::printf("  %-14s absent\n", aseg::scene_class_name(cls));
    }
  }

  if (!report_path.empty()) {
    nlohmann::ordered_json j;
    j["agent"] = cfg.agent;
    j["policy"] = cfg.policy;
    j["images"] = m.images;
    j["initial_accuracy"] = m.initial_accuracy;
    j["accuracy_curve"] = m.accuracy_curve;
    j["final_accuracy"] = m.final_accuracy;
    j["mean_iou"] = m.mean_iou;
    j["mean_objective"] = m.mean_objective;
    j["budget_px"] = m.budget_px;
    j["budget_ratio_percent"] = 100.0 * static_cast<double>(m.budget_px) / area;
    auto& cls = j["class_iou"] = nlohmann::ordered_json::array();
    for (const auto& v : m.class_iou) cls.push_back(v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json());
    auto& locs = j["locations"] = nlohmann::ordered_json::array();
    for (const auto& per_image : m.locations) {
      auto row = nlohmann::ordered_json::array();
      for (const auto& g : per_image) row.push_back({g.top, g.left});
      locs.push_back(row);
    }
    std::ofstream out(report_path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write report '" + report_path + "'");
  }
  return 0;
}

int cmd_rollout(const CLI::App* cmd, const ConfigArgs& args, const SampleArgs& sample_args,
                const std::string& checkpoint, const std::string& out_path) {
  const aseg::RunConfig cfg = args.resolve(cmd, sibling_config(checkpoint));
  const aseg::Sample sample = sample_args.load(cfg);
  auto model = aseg::load_checkpoint<float>(checkpoint, cfg.arch());
  const auto tr = aseg::rollout(model, sample, cfg.agent_config(), aseg::rollout_seed(cfg.seed, 0));
  if (out_path.empty() || out_path == "-") {
    aseg::write_trace(std::cout, tr.steps);
  } else {
    aseg::write_trace(out_path, tr.steps);
    std::printf("%zu steps, final accuracy %.4f -> %s\n", tr.steps.size(), tr.final_accuracy(),
                out_path.c_str());
  }
  return 0;
}

int cmd_render(const CLI::App* cmd, const ConfigArgs& args, const SampleArgs& sample_args,
               const std::string& checkpoint, const std::string& trace_path,
               const std::string& out_dir) {
  const aseg::RunConfig cfg = args.resolve(cmd, sibling_config(checkpoint));
  const aseg::Sample sample = sample_args.load(cfg);
  auto model = aseg::load_checkpoint<float>(checkpoint, cfg.arch());
  const auto recorded = aseg::read_trace(trace_path, cfg.glimpse_size);
  const auto tr = aseg::replay_trace(model, sample, cfg.agent_config(), recorded);
  fs::create_directories(out_dir);
  for (int t = 1; t <= static_cast<int>(tr.steps.size()); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "step_%02d.png", t);
    aseg::write_png_rgb((fs::path(out_dir) / name).string(),
                        aseg::render_step(sample.image, tr.steps, tr.maps, t));
  }
  std::printf("%zu panels -> %s\n", tr.steps.size(), out_dir.c_str());
  return 0;
}

int cmd_budget(int height, int width, int glimpse) {
  std::printf("pixel budget, %dx%d image, %dpx glimpses (%% of image pixels)\n", height, width, glimpse);
  std::printf("%-9s %-16s %-10s %-10s\n", "glimpses", "full resolution", "2 scales", "3 scales");
  std::array<aseg::RetinaConfig, 3> retinas{aseg::RetinaConfig::with_scales(1, glimpse),
                                            aseg::RetinaConfig::with_scales(2, glimpse),
                                            aseg::RetinaConfig::with_scales(3, glimpse)};
  for (int n = 1; n <= 10; ++n) {
    std::printf("%-9d", n);
    for (int s = 0; s < 3; ++s) {
      char cell[16];
      std::snprintf(cell, sizeof cell, "%.2f%%", aseg::budget_ratio(retinas[s], n, height, width));
      std::printf(" %-*s", s == 0 ? 16 : 10, cell);
    }
    std::printf("\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attend-and-segment active segmentation agent"};
  app.require_subcommand(1);

  ConfigArgs train_cfg, eval_cfg, roll_cfg, render_cfg;
  SampleArgs roll_sample, render_sample;
  std::string eval_ckpt, eval_report, roll_ckpt, roll_out, render_ckpt, render_trace, render_out;
  int budget_h = 128, budget_w = 256, budget_g = 48;

  auto* train = app.add_subcommand("train", "train an agent; writes checkpoints, history, config");
  train_cfg.attach(train);

  auto* evaluate = app.add_subcommand("evaluate", "accuracy curve and IoU on the validation split");
  eval_cfg.attach(evaluate);
  evaluate->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  evaluate->add_option("--report", eval_report, "write a JSON report here");

  auto* roll = app.add_subcommand("rollout", "run one rollout and write a JSON-lines trace");
  roll_cfg.attach(roll);
  roll_sample.attach(roll);
  roll->add_option("--checkpoint", roll_ckpt, "checkpoint file")->required();
  roll->add_option("--out", roll_out, "trace file (default: stdout)");

  auto* render = app.add_subcommand("render", "panel images for every step of a trace");
  render_cfg.attach(render);
  render_sample.attach(render);
  render->add_option("--checkpoint", render_ckpt, "checkpoint file")->required();
  render->add_option("--trace", render_trace, "trace written by rollout")->required();
  render->add_option("--out-dir", render_out, "output directory")->required();

  auto* budget = app.add_subcommand("budget", "ratio of pixels read to image size");
  budget->add_option("--height", budget_h, "image height")->check(CLI::PositiveNumber);
  budget->add_option("--width", budget_w, "image width")->check(CLI::PositiveNumber);
  budget->add_option("--glimpse-size", budget_g, "glimpse side")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*train) return cmd_train(train, train_cfg);
    if (*evaluate) return cmd_evaluate(evaluate, eval_cfg, eval_ckpt, eval_report);
    if (*roll) return cmd_rollout(roll, roll_cfg, roll_sample, roll_ckpt, roll_out);
    if (*render) return cmd_render(render, render_cfg, render_sample, render_ckpt, render_trace, render_out);
    if (*budget) return cmd_budget(budget_h, budget_w, budget_g);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const aseg::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
