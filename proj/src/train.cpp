#include "deltaseg/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace deltaseg {

void RunConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("run config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("run config: batch_size must be >= 1");
    if (!(lr0 > eta_min) || eta_min < 0.0)
        throw std::invalid_argument("run config: need lr0 > eta_min >= 0");
    if (class_weight_mode != "auto" && class_weight_mode != "uniform")
        throw std::invalid_argument("run config: class_weight_mode must be auto or uniform");
    model.validate();
    loss.validate();
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::vector<float> to_float(const std::vector<double>& v) {
    std::vector<float> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<float>(v[i]);
    return out;
}

double eval_pass(DeltaSegModelT<float>& model, const std::vector<Sample>& samples, const LossWeights& lw,
                 const std::vector<float>& cw, int batch_size, ConfusionAccumulator& acc) {
    const bool was_training = model.training();
    model.set_training(false);
    auto batches = make_batches(samples, batch_size, 0, 0, nullptr);
    double loss_sum = 0.0;
    std::int64_t px = 0;
    for (const auto& b : batches) {
        auto out = model.forward(b.images);
        auto rep = composite_loss(out.primary, b.labels, lw, cw);
        loss_sum += rep.total->item() * static_cast<double>(b.labels.numel());
        px += b.labels.numel();
        acc.add(argmax_classes(out.primary), b.labels);
    }
    model.set_training(was_training);
    return px > 0 ? loss_sum / static_cast<double>(px) : 0.0;
}

}  // namespace

MetricsReport evaluate_model(DeltaSegModelT<float>& model, const std::vector<Sample>& samples,
                             const std::vector<std::string>& class_names, int batch_size) {
    ConfusionAccumulator acc(model.config().num_classes);
    LossWeights lw;
    std::vector<float> cw(static_cast<std::size_t>(model.config().num_classes), 1.0f);
    eval_pass(model, samples, lw, cw, batch_size, acc);
    return score(acc, class_names);
}

TrainResult train(const RunConfig& cfg, bool quiet) {
    cfg.validate();
    if (!cfg.out_dir.empty()) fs::create_directories(cfg.out_dir);

    auto [train_mf, train_samples] =
        load_dataset(cfg.data_root, "train", cfg.model.num_classes, cfg.model.input_h, cfg.model.input_w);
    std::vector<Sample> val_samples;
    std::vector<std::string> class_names = train_mf.class_names;
    try {
        auto [val_mf, vs] =
            load_dataset(cfg.data_root, "val", cfg.model.num_classes, cfg.model.input_h, cfg.model.input_w);
        val_samples = std::move(vs);
    } catch (const std::exception&) {
        val_samples = train_samples;  // no val split; validate on train
    }

    TrainResult res;
    res.class_weights = cfg.class_weight_mode == "auto"
                            ? auto_class_weights(train_mf.class_pixel_counts)
                            : std::vector<double>(static_cast<std::size_t>(cfg.model.num_classes), 1.0);
    const std::vector<float> cw = to_float(res.class_weights);

    DeltaSegModelT<float> model(cfg.model);
    model.set_training(true);
    AdamWConfig oc;
    oc.weight_decay = cfg.weight_decay;
    AdamW opt(model.params(), oc);

    const long long batches_per_epoch =
        (static_cast<long long>(train_samples.size()) + cfg.batch_size - 1) / cfg.batch_size;
    const long long total_steps = static_cast<long long>(cfg.epochs) * batches_per_epoch;

    std::ofstream step_log, epoch_log;
    if (!cfg.out_dir.empty()) {
        step_log.open(fs::path(cfg.out_dir) / "train_log.csv");
        step_log << "step,lr,total_loss,ce,dice,focal\n";
        epoch_log.open(fs::path(cfg.out_dir) / "val_log.csv");
        epoch_log << "epoch,val_loss,val_defect_miou,val_mean_f1\n";
        std::ofstream wf(fs::path(cfg.out_dir) / "class_weights.csv");
        wf << "class,weight\n";
        for (std::size_t c = 0; c < res.class_weights.size(); ++c)
            wf << class_names[c] << "," << fmt(res.class_weights[c]) << "\n";
    }

    const std::string last_path = cfg.out_dir.empty() ? "" : (fs::path(cfg.out_dir) / "last.ckpt").string();
    const std::string best_path = cfg.out_dir.empty() ? "" : (fs::path(cfg.out_dir) / "best.ckpt").string();
    double best_miou = -1.0, best_loss = 0.0;
    long long step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto batches = make_batches(train_samples, cfg.batch_size, cfg.seed, static_cast<std::uint64_t>(epoch),
                                    cfg.augment ? &cfg.aug : nullptr);
        for (const auto& b : batches) {
            const double lr = cosine_lr(step, total_steps, cfg.lr0, cfg.eta_min);
            auto out = model.forward(b.images);
            auto rep = deep_supervised_loss(out, b.labels, cfg.loss, cw);
            const double total = rep.total->item();
            if (!std::isfinite(total)) {
                if (!last_path.empty()) save_checkpoint(model, last_path);
                throw std::runtime_error("training aborted: non-finite loss at step " + std::to_string(step) +
                                         (last_path.empty() ? "" : "; last finite state saved to " + last_path));
            }
            opt.zero_grad();
            backward(rep.total);
            opt.step(lr);

            StepLog sl{step, lr, total, rep.primary.ce, rep.primary.dice, rep.primary.focal};
            res.steps.push_back(sl);
            const std::string line = std::to_string(sl.step) + "," + fmt(sl.lr) + "," + fmt(sl.total) + "," +
                                     fmt(sl.ce) + "," + fmt(sl.dice) + "," + fmt(sl.focal);
            if (step_log) step_log << line << "\n";
            if (!quiet) std::cout << line << "\n";
            ++step;
        }

        if ((epoch + 1) % cfg.eval_interval == 0 || epoch + 1 == cfg.epochs) {
            ConfusionAccumulator acc(cfg.model.num_classes);
            const double vloss = eval_pass(model, val_samples, cfg.loss, cw, cfg.batch_size, acc);
            auto rep = score(acc, class_names);
            EpochLog el{epoch, vloss, rep.defect_miou, rep.mean_f1};
            res.epochs.push_back(el);
            const std::string line = std::to_string(epoch) + "," + fmt(vloss) + "," +
                                     (rep.defect_miou ? fmt(*rep.defect_miou) : "undefined") + "," +
                                     (rep.mean_f1 ? fmt(*rep.mean_f1) : "undefined");
            if (epoch_log) epoch_log << line << "\n";
            if (!quiet) std::cout << "epoch," << line << "\n";

            const double miou = rep.defect_miou.value_or(-1.0);
            if (!best_path.empty() &&
                (miou > best_miou || (miou == best_miou && vloss < best_loss) || best_miou < 0.0)) {
                best_miou = miou;
                best_loss = vloss;
                save_checkpoint(model, best_path);
                res.best_checkpoint = best_path;
            }
        }
    }

    if (!last_path.empty()) {
        save_checkpoint(model, last_path);
        res.last_checkpoint = last_path;
        if (res.best_checkpoint.empty()) res.best_checkpoint = last_path;
    }
    return res;
}

MetricsReport evaluate_checkpoint(const std::string& checkpoint, const std::string& data_root,
                                  const std::string& split) {
    auto model = load_checkpoint(checkpoint);
    const int C = model->config().num_classes;

    const fs::path classes_file = fs::path(data_root) / "classes.txt";
    if (fs::exists(classes_file)) {
        std::ifstream f(classes_file);
        int lines = 0;
        std::string line;
        while (std::getline(f, line))
            if (!line.empty() && line != "\r") ++lines;
        if (lines != C)
            throw std::runtime_error("class-count mismatch: checkpoint has " + std::to_string(C) +
                                     " classes, dataset lists " + std::to_string(lines));
    }

    auto [mf, samples] = load_dataset(data_root, split, C, model->config().input_h, model->config().input_w);
    return evaluate_model(*model, samples, mf.class_names);
}

int predict(const std::string& checkpoint, const std::vector<std::string>& image_paths, const std::string& out_dir,
            const std::string& palette_path) {
    auto model = load_checkpoint(checkpoint);
    model->set_training(false);
    const int H = model->config().input_h, W = model->config().input_w;
    const int C = model->config().num_classes;
    fs::create_directories(out_dir);

    std::vector<std::array<std::uint8_t, 3>> palette;
    if (!palette_path.empty()) {
        palette = read_palette(palette_path);
        if (static_cast<int>(palette.size()) < C)
            throw std::runtime_error("palette lists " + std::to_string(palette.size()) + " colours, model has " +
                                     std::to_string(C) + " classes");
    } else {
        for (int c = 0; c < C; ++c) palette.push_back(class_color(c));
    }
    {
        std::ofstream pf(fs::path(out_dir) / "palette.txt");
        for (int c = 0; c < C; ++c)
            pf << c << " " << static_cast<int>(palette[static_cast<std::size_t>(c)][0]) << " "
               << static_cast<int>(palette[static_cast<std::size_t>(c)][1]) << " "
               << static_cast<int>(palette[static_cast<std::size_t>(c)][2]) << "\n";
    }

    int failures = 0;
    for (const auto& path : image_paths) {
        Image8 img;
        try {
            img = read_png(path);
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << path << ": " << e.what() << "\n";
            ++failures;
            continue;
        }
        auto t = image_to_tensor(img);
        if (img.height != H || img.width != W)
            t = reshape(resize_bilinear(reshape(t, {1, 3, img.height, img.width}), H, W), {3, H, W});
        auto batched = reshape(t, {1, 3, H, W});
        auto out = model->forward(batched);
        LabelMap pred = argmax_classes(out.primary);

        const std::string stem = fs::path(path).stem().string();
        write_png((fs::path(out_dir) / (stem + "_mask.png")).string(), labels_to_mask(pred));

        Image8 color;
        color.width = W;
        color.height = H;
        color.channels = 3;
        color.pixels.resize(static_cast<std::size_t>(H) * W * 3);
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const auto& col = palette[static_cast<std::size_t>(pred.at(0, y, x))];
                for (int c = 0; c < 3; ++c) color.at(y, x, c) = col[static_cast<std::size_t>(c)];
            }
        write_png((fs::path(out_dir) / (stem + "_color.png")).string(), color);
    }
    return failures == 0 ? 0 : 1;
}

}  // namespace deltaseg
