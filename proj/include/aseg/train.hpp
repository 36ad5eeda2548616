#pragma once

// Training loop over batched rollouts with averaged gradients. Each epoch ends with a
// validation pass, and the best model by validation accuracy is kept.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "aseg/agent.hpp"
#include "aseg/checkpoint.hpp"
#include "aseg/config.hpp"
#include "aseg/data.hpp"
#include "aseg/model.hpp"
#include "aseg/optim.hpp"

namespace aseg {

class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochRecord {
  int epoch = 0;
  double train_objective = 0.0;  // mean rollout objective over the epoch
  double train_accuracy = 0.0;   // mean final accuracy of the training rollouts
  double val_objective = 0.0;
  double val_accuracy = 0.0;     // mean final accuracy on the validation split
  double val_miou = 0.0;
};

struct History {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["best_epoch"] = best_epoch;
    j["best_val_accuracy"] = best_val_accuracy;
    j["epochs"] = nlohmann::ordered_json::array();
    for (const auto& e : epochs) {
      j["epochs"].push_back({{"epoch", e.epoch},
                             {"train_objective", e.train_objective},
                             {"train_accuracy", e.train_accuracy},
                             {"val_objective", e.val_objective},
                             {"val_accuracy", e.val_accuracy},
                             {"val_miou", e.val_miou}});
    }
    return j;
  }
};

using TrainModel = Model<float>;

/// Dataset of a run, already split into train and validation parts.
inline std::pair<Dataset, Dataset> load_run_data(const RunConfig& cfg) {
  Dataset all;
  if (cfg.dataset == "synthetic") {
    SyntheticSceneConfig sc;
    sc.num_classes = cfg.num_classes;
    sc.height = cfg.image_height;
    sc.width = cfg.image_width;
    sc.seed = cfg.seed;
    all = generate_dataset(sc, cfg.num_samples);
  } else {
    all = load_folder(cfg.images_dir, cfg.labels_dir, cfg.image_height, cfg.image_width,
                      cfg.num_classes);
  }
  if (all.size() < 2) throw DatasetError("dataset needs at least two samples");
  return split(all, cfg.val_fraction, mix_seed(cfg.seed, 0x5b1f));
}

/// Base seed of every validation and evaluation pass of a run.
inline std::uint64_t eval_seed(std::uint64_t run_seed) { return mix_seed(run_seed, 0xe7a1); }

template <typename T>
BatchMetrics evaluate(Model<T>& model, const Dataset& data, const AgentConfig& agent,
                      std::uint64_t seed) {
  return batch_rollout(model, data, agent, seed);
}

/// Throws NonFiniteLossError naming the first non-finite stream.
template <typename T>
void check_finite(const RolloutTrace<T>& trace) {
  if (!std::isfinite(trace.overview_loss)) {
    throw NonFiniteLossError("non-finite loss in stream 'overview' at step 0");
  }
  for (const auto& s : trace.steps) {
    const std::pair<const char*, double> streams[] = {
        {"local", s.loss.local}, {"global", s.loss.global}, {"final", s.loss.final}};
    for (const auto& [name, v] : streams) {
      if (!std::isfinite(v)) {
        throw NonFiniteLossError(std::string("non-finite loss in stream '") + name + "' at step " +
                                 std::to_string(s.t));
      }
    }
  }
}

class Trainer {
 public:
  using EpochCallback = std::function<void(const EpochRecord&)>;

  Trainer(const RunConfig& cfg, Dataset train, Dataset val)
      : cfg_(cfg),
        agent_(cfg.agent_config()),
        train_(std::move(train)),
        val_(std::move(val)),
        model_(cfg.arch(), mix_seed(cfg.seed, 0x1417)),
        best_(model_),
        adam_(model_.parameters(), {.lr = cfg.lr}) {
    cfg_.validate();
    if (train_.empty() || val_.empty()) throw DatasetError("train and validation splits must be non-empty");
  }

  TrainModel& model() { return model_; }
  TrainModel& best_model() { return best_; }
  const History& history() const { return history_; }
  const AgentConfig& agent() const { return agent_; }
  const Dataset& validation() const { return val_; }

  /// One pass over the training split followed by validation.
  EpochRecord run_epoch() {
    const int epoch = static_cast<int>(history_.epochs.size()) + 1;
    std::vector<std::size_t> order(train_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng(mix_seed(cfg_.seed, 0x10000 + epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochRecord rec;
    rec.epoch = epoch;
    auto& params = model_.parameters();
    const std::size_t bs = static_cast<std::size_t>(cfg_.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      params.zero_grad();
      for (std::size_t pos = start; pos < end; ++pos) {
        Graph<float> graph(true);
        auto result = run_rollout(model_, train_[order[pos]], agent_,
                                  mix_seed(mix_seed(cfg_.seed, epoch), pos), graph);
        check_finite(result.trace);
        graph.backward(result.objective);
        graph.accumulate_parameter_grads();
        rec.train_objective += result.trace.objective();
        rec.train_accuracy += result.trace.final_accuracy();
      }
      const float inv = 1.0f / static_cast<float>(end - start);
      for (auto& p : params) {
        for (auto& g : p.grad.values()) g *= inv;
      }
      adam_.step(params);
    }
    rec.train_objective /= static_cast<double>(order.size());
    rec.train_accuracy /= static_cast<double>(order.size());

    const BatchMetrics val = evaluate(model_, val_, agent_, eval_seed(cfg_.seed));
    rec.val_objective = val.mean_objective;
    rec.val_accuracy = val.final_accuracy;
    rec.val_miou = val.mean_iou;
    if (history_.epochs.empty() || rec.val_accuracy > history_.best_val_accuracy) {
      history_.best_epoch = epoch;
      history_.best_val_accuracy = rec.val_accuracy;
      best_ = model_;
    }
    history_.epochs.push_back(rec);
    return rec;
  }

  void run(const EpochCallback& on_epoch = {}) {
    while (static_cast<int>(history_.epochs.size()) < cfg_.epochs) {
      const EpochRecord rec = run_epoch();
      if (on_epoch) on_epoch(rec);
    }
  }

 private:
  RunConfig cfg_;
  AgentConfig agent_;
  Dataset train_, val_;
  TrainModel model_;
  TrainModel best_;
  Adam<float> adam_;
  History history_;
};

struct RunArtifacts {
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::filesystem::path history;
  std::filesystem::path config;
};

inline RunArtifacts run_artifacts(const std::filesystem::path& out_dir) {
  return {out_dir / "best.ckpt", out_dir / "last.ckpt", out_dir / "history.json",
          out_dir / "config.txt"};
}

/// Trains per `cfg` and writes every run artifact into out_dir.
inline History train(const RunConfig& cfg, const Trainer::EpochCallback& on_epoch = {}) {
  cfg.validate();
  auto [train_set, val_set] = load_run_data(cfg);
  Trainer trainer(cfg, std::move(train_set), std::move(val_set));
  const RunArtifacts files = run_artifacts(cfg.out_dir);
  std::filesystem::create_directories(cfg.out_dir);
  {
    std::ofstream out(files.config);
    out << cfg.to_text();
    if (!out) throw std::runtime_error("cannot write " + files.config.string());
  }
  trainer.run(on_epoch);
  save_checkpoint(trainer.best_model(), files.best_checkpoint.string());
  save_checkpoint(trainer.model(), files.last_checkpoint.string());
  std::ofstream out(files.history);
  out << trainer.history().to_json().dump(2) << "\n";
  if (!out) throw std::runtime_error("cannot write " + files.history.string());
  return trainer.history();
}

/// Validation metrics of a stored checkpoint under `cfg`. Agent settings may differ from
/// training; the architecture may not.
inline BatchMetrics evaluate_checkpoint(const std::string& checkpoint, const RunConfig& cfg) {
  cfg.validate();
  TrainModel model = load_checkpoint<float>(checkpoint, cfg.arch());
  const auto data = load_run_data(cfg);
  return evaluate(model, data.second, cfg.agent_config(), eval_seed(cfg.seed));
}

}  // namespace aseg
