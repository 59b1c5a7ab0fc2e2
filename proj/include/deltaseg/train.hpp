#pragma once

#include <optional>
#include <string>
#include <vector>

#include "deltaseg/data.hpp"
#include "deltaseg/loss.hpp"
#include "deltaseg/metrics.hpp"
#include "deltaseg/network.hpp"
#include "deltaseg/optim.hpp"

namespace deltaseg {

struct RunConfig {
    int epochs = 100;
    int batch_size = 16;
    double lr0 = 1e-3;
    double eta_min = 0.0;
    double weight_decay = 1e-5;
    std::uint64_t seed = 0;
    std::string data_root;
    std::string out_dir;
    int eval_interval = 1;
    bool augment = true;
    std::string class_weight_mode = "auto";  // "auto" (inverse frequency) or "uniform"
    AugmentConfig aug;
    ModelConfig model;
    LossWeights loss;

    void validate() const;
};

struct StepLog {
    long long step = 0;
    double lr = 0.0, total = 0.0, ce = 0.0, dice = 0.0, focal = 0.0;
};

struct EpochLog {
    int epoch = 0;
    double val_loss = 0.0;
    std::optional<double> val_defect_miou;
    std::optional<double> val_mean_f1;
};

struct TrainResult {
    std::vector<StepLog> steps;
    std::vector<EpochLog> epochs;
    std::vector<double> class_weights;
    std::string last_checkpoint;
    std::string best_checkpoint;
};

// Deep-supervised training with per-step cosine annealing. Writes
// <out>/train_log.csv (one line per step), <out>/val_log.csv (one per epoch)
// and best/last checkpoints. A non-finite loss saves the last finite state,
// then aborts.
TrainResult train(const RunConfig& cfg, bool quiet = false);

MetricsReport evaluate_model(DeltaSegModelT<float>& model, const std::vector<Sample>& samples,
                             const std::vector<std::string>& class_names, int batch_size = 8);

// Loads the checkpoint, validates class counts against the dataset and scores
// the split.
MetricsReport evaluate_checkpoint(const std::string& checkpoint, const std::string& data_root,
                                  const std::string& split);

// One index PNG plus one palette-colourized PNG per input, both at the model's
// input resolution. Unreadable images are skipped with a warning; the return
// value is 0 only if every input was processed.
int predict(const std::string& checkpoint, const std::vector<std::string>& image_paths, const std::string& out_dir,
            const std::string& palette_path = "");

}  // namespace deltaseg
