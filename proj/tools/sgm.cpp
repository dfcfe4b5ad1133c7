// Command-line front end: synthetic data generation, training, fusion,
// evaluation, ablation sweeps, gradient checks and checkpoint inspection.

#include "sgm/checkpoint.hpp"
#include "sgm/data.hpp"
#include "sgm/hdr.hpp"
#include "sgm/image_io.hpp"
#include "sgm/manifest.hpp"
#include "sgm/model.hpp"
#include "sgm/train.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace sgm;

namespace {

struct CommonOpts {
    std::uint64_t seed = 0;
    std::string precision = "f32";
    std::string cell = "sgm";
    std::string mode = "bi";
};

std::vector<int> parse_lengths(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(std::stoi(item));
    return out;
}

Tensor<float> squeeze_batch(const Tensor<float>& y) {
    return Tensor<float>(Shape{y.extent(1), y.extent(2), y.extent(3)}, y.vec());
}

// ---------------------------------------------------------------------------
// gen-data

int run_gen_data(std::uint64_t seed, const fs::path& out_dir, int count, int n,
                 std::int64_t size, int blobs, double amplitude, bool quantize) {
    fs::create_directories(out_dir);
    std::vector<SequenceDescriptor> descs;
    for (int s = 0; s < count; ++s) {
        SceneSpec spec;
        spec.seed = seed + static_cast<std::uint64_t>(s);
        spec.height = size;
        spec.width = size;
        spec.num_frames = n;
        spec.num_blobs = blobs;
        spec.motion_amplitude = amplitude;
        spec.quantize_8bit = quantize;
        ExposureSequence<float> seq = generate<float>(spec);

        char name[32];
        std::snprintf(name, sizeof(name), "seq%03d", s);
        const fs::path dir = out_dir / name;
        fs::create_directories(dir);
        SequenceDescriptor desc;
        for (std::size_t i = 0; i < seq.frames.size(); ++i) {
            const std::string ext = quantize ? ".ppm" : ".pfm";
            fs::path p = dir / ("frame" + std::to_string(i) + ext);
            if (quantize)
                write_ppm(p, seq.frames[i]);
            else
                write_pfm(p, seq.frames[i]);
            desc.frame_paths.push_back(p);
            desc.exposures.push_back(static_cast<double>(seq.exposure_times[i]));
        }
        desc.ref_index = static_cast<int>(seq.ref_index);
        desc.gt_path = dir / "gt.pfm";
        write_pfm(desc.gt_path, *seq.hdr_gt);
        descs.push_back(std::move(desc));
    }
    manifest_save(out_dir / "manifest.txt", descs);
    std::cout << "wrote " << count << " sequences under " << out_dir.string()
              << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// train

template <class T>
int run_train(const fs::path& manifest, const fs::path& ckpt,
              const fs::path& metrics_path, const TrainConfig& cfg) {
    std::vector<ExposureSequence<T>> dataset;
    for (const auto& desc : manifest_load(manifest))
        dataset.push_back(load_sequence<T>(desc));
    FusionNet<T> net = make_fusion_net<T>(cfg.cell_kind, cfg.mode, cfg.seed);
    std::ofstream metrics;
    std::ostream* metrics_out = nullptr;
    if (!metrics_path.empty()) {
        metrics.open(metrics_path);
        if (!metrics) throw std::runtime_error("cannot write " + metrics_path.string());
        metrics_out = &metrics;
    }
    train(net, dataset, cfg, ckpt, metrics_out,
          [](const StepInfo& info) {
              if (info.step % 10 == 0 || info.step == 1)
                  std::cout << "step " << info.step << " epoch " << info.epoch
                            << " lr " << info.lr << " loss " << info.loss
                            << " psnr_t " << info.psnr_t << "\n";
              return true;
          });
    std::cout << "checkpoint written to " << ckpt.string() << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// fuse / eval

template <class T>
FusionNet<T> net_from_checkpoint(const fs::path& ckpt, CheckpointMeta& meta) {
    CheckpointInfo info = inspect_checkpoint(ckpt);
    FusionNet<T> net = make_fusion_net<T>(info.meta.kind, info.meta.mode, 0);
    ParamRegistry<T> params = net.registry();
    meta = load_checkpoint(ckpt, params);
    return net;
}

template <class T>
int run_fuse(const fs::path& ckpt, const fs::path& manifest,
             const fs::path& out_dir) {
    CheckpointMeta meta;
    FusionNet<T> net = net_from_checkpoint<T>(ckpt, meta);
    fs::create_directories(out_dir);
    for (const auto& desc : manifest_load(manifest)) {
        ExposureSequence<T> seq = load_sequence<T>(desc);
        Tensor<T> y = forward(net, batched_frames(seq), seq.exposure_times,
                              seq.ref_index);
        write_pfm(out_dir / (desc.name + ".pfm"),
                  squeeze_batch(y.template cast<float>()));
        std::cout << desc.name << " N=" << seq.frames.size() << " fused\n";
    }
    return 0;
}

template <class T>
int run_eval(const fs::path& ckpt, const fs::path& manifest, std::ostream& out) {
    CheckpointMeta meta;
    FusionNet<T> net = net_from_checkpoint<T>(ckpt, meta);
    out << "name,N,psnr_l,psnr_t\n";
    for (const auto& desc : manifest_load(manifest)) {
        ExposureSequence<T> seq = load_sequence<T>(desc);
        if (!seq.hdr_gt)
            throw std::runtime_error("eval: sequence " + desc.name +
                                     " has no ground truth");
        Tensor<T> y = forward(net, batched_frames(seq), seq.exposure_times,
                              seq.ref_index);
        Tensor<T> gt(Shape{1, 3, seq.hdr_gt->extent(1), seq.hdr_gt->extent(2)},
                     seq.hdr_gt->vec());
        out << desc.name << "," << seq.frames.size() << ","
            << psnr_linear(y, gt) << "," << psnr_tonemapped(y, gt) << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// ablate

template <class T>
int run_ablate(const std::vector<std::string>& kinds, const TrainConfig& base_cfg,
               int count, std::int64_t size, const fs::path& out_csv) {
    // Shared desk fixture: sequences of 7 frames; each variant trains on
    // the same data and is scored on 3/5/7-frame windows.
    std::vector<ExposureSequence<T>> dataset;
    for (int s = 0; s < count; ++s) {
        SceneSpec spec;
        spec.seed = base_cfg.seed + static_cast<std::uint64_t>(s);
        spec.height = size;
        spec.width = size;
        spec.num_frames = 7;
        dataset.push_back(generate<T>(spec));
    }
    const std::vector<int> lengths = {3, 5, 7};

    std::ostringstream csv;
    csv << "cell";
    for (const char* m : {"psnr_l", "psnr_t"})
        for (int n : lengths) csv << "," << m << "_n" << n;
    csv << "\n";

    std::cout << std::left << std::setw(9) << "cell";
    for (int n : lengths) std::cout << std::right << std::setw(10) << ("L@" + std::to_string(n));
    for (int n : lengths) std::cout << std::right << std::setw(10) << ("T@" + std::to_string(n));
    std::cout << "\n";

    for (const std::string& kind_name : kinds) {
        TrainConfig cfg = base_cfg;
        cfg.cell_kind = parse_cell_kind(kind_name);
        cfg.variable_length_set = lengths;
        FusionNet<T> net = make_fusion_net<T>(cfg.cell_kind, cfg.mode, cfg.seed);
        train(net, dataset, cfg);

        std::map<int, double> mse_l, mse_t;
        for (int n : lengths) {
            double ml = 0.0, mt = 0.0;
            for (const auto& full : dataset) {
                ExposureSequence<T> seq = subsequence(full, n);
                Tensor<T> y = forward(net, batched_frames(seq),
                                      seq.exposure_times, seq.ref_index);
                Tensor<T> gt(Shape{1, 3, seq.hdr_gt->extent(1),
                                   seq.hdr_gt->extent(2)},
                             seq.hdr_gt->vec());
                Tensor<T> ty = mu_law(y.detached());
                Tensor<T> tg = mu_law(gt);
                for (std::int64_t i = 0; i < y.numel(); ++i) {
                    double dl = double(y.data()[i]) - double(gt.data()[i]);
                    double dt = double(ty.data()[i]) - double(tg.data()[i]);
                    ml += dl * dl / double(y.numel());
                    mt += dt * dt / double(y.numel());
                }
            }
            mse_l[n] = ml / static_cast<double>(dataset.size());
            mse_t[n] = mt / static_cast<double>(dataset.size());
        }
        csv << kind_name;
        std::cout << std::left << std::setw(9) << kind_name << std::right
                  << std::fixed << std::setprecision(2);
        for (auto* m : {&mse_l, &mse_t})
            for (int n : lengths) {
                const double psnr = 10.0 * std::log10(1.0 / (*m)[n]);
                csv << "," << psnr;
                std::cout << std::setw(10) << psnr;
            }
        csv << "\n";
        std::cout << "\n" << std::defaultfloat;
    }
    if (!out_csv.empty()) {
        std::ofstream f(out_csv);
        f << csv.str();
    }
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

template <class T>
int run_gradcheck(CellKind kind, Mode mode, std::uint64_t seed,
                  std::int64_t size, int coords, double tolerance) {
    FusionNet<T> net = make_fusion_net<T>(kind, mode, seed);
    SceneSpec spec;
    spec.seed = seed;
    spec.height = size;
    spec.width = size;
    spec.num_frames = 3;
    spec.quantize_8bit = false;
    ExposureSequence<T> seq = generate<T>(spec);
    auto frames = batched_frames(seq);
    Tensor<T> gt(Shape{1, 3, size, size}, seq.hdr_gt->vec());
    ParamRegistry<T> params = net.registry();
    auto loss_fn = [&](Tape<T>&) {
        return tonemapped_loss(
            forward(net, frames, seq.exposure_times, seq.ref_index), gt);
    };
    GradCheckReport report = gradcheck(params, loss_fn, tolerance, coords, seed);
    std::cout << "cell=" << cell_kind_name(kind) << " mode=" << mode_name(mode)
              << " coords=" << report.coords_checked
              << " max_rel_err=" << report.max_rel_err
              << " worst=" << report.worst_param << " "
              << (report.pass ? "PASS" : "FAIL") << "\n";
    return report.pass ? 0 : 2;
}

// ---------------------------------------------------------------------------
// inspect-ckpt

int run_inspect(const fs::path& ckpt) {
    CheckpointInfo info = inspect_checkpoint(ckpt);
    std::cout << "cell: " << cell_kind_name(info.meta.kind)
              << "\nmode: " << mode_name(info.meta.mode)
              << "\ndtype: " << (info.meta.dtype == 0 ? "f32" : "f64")
              << "\nsteps: " << info.meta.step_count << "\n\n";
    std::map<std::string, std::int64_t> groups;
    std::int64_t total = 0;
    for (const auto& e : info.entries) {
        std::int64_t n = 1;
        for (auto x : e.shape) n *= x;
        std::cout << std::left << std::setw(40) << e.name << shape_str(e.shape)
                  << "  " << n << "\n";
        groups[e.name.substr(0, e.name.find('.'))] += n;
        total += n;
    }
    std::cout << "\n";
    for (const auto& [g, n] : groups)
        std::cout << "group " << std::left << std::setw(12) << g << n << "\n";
    std::cout << "total parameters: " << total << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-gated memory recurrent network for scalable HDR fusion"};
    app.require_subcommand(1);
    app.fallthrough(true);
    app.set_config("--config");

    CommonOpts common;
    app.add_option("--seed", common.seed, "Global RNG seed")->capture_default_str();

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
    fs::path gen_out;
    int gen_count = 8, gen_n = 3, gen_blobs = 5;
    std::int64_t gen_size = 64;
    double gen_amp = 6.0;
    bool gen_no_quant = false;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--count", gen_count, "Number of sequences");
    gen->add_option("--n", gen_n, "Frames per sequence");
    gen->add_option("--size", gen_size, "Image height and width");
    gen->add_option("--blobs", gen_blobs, "Gaussian blobs per scene");
    gen->add_option("--amplitude", gen_amp, "Motion amplitude in pixels");
    gen->add_flag("--no-quantize", gen_no_quant, "Keep frames as float PFM");

    // train
    auto* tr = app.add_subcommand("train", "Train a fusion network");
    fs::path tr_manifest, tr_ckpt, tr_metrics;
    TrainConfig tr_cfg;
    tr_cfg.epochs = 50;
    std::string tr_varlen;
    bool tr_shuffle = false;
    tr->add_option("--manifest", tr_manifest, "Training manifest")->required();
    tr->add_option("--out", tr_ckpt, "Checkpoint path")->required();
    tr->add_option("--metrics", tr_metrics, "Metric log CSV path");
    tr->add_option("--cell", common.cell, "Cell kind");
    tr->add_option("--mode", common.mode, "uni or bi");
    tr->add_option("--epochs", tr_cfg.epochs, "Training epochs");
    tr->add_option("--lr", tr_cfg.learning_rate, "Base learning rate");
    tr->add_option("--batch", tr_cfg.batch_size, "Batch size");
    tr->add_option("--patch", tr_cfg.patch_size, "Crop size");
    tr->add_option("--halve-every", tr_cfg.halve_every, "Epochs between LR halvings");
    tr->add_flag("--shuffle-order", tr_shuffle, "Shuffle exposure order per step");
    tr->add_option("--var-lengths", tr_varlen, "Comma list of lengths to sample");
    tr->add_option("--precision", common.precision, "f32 or f64");

    // fuse
    auto* fu = app.add_subcommand("fuse", "Fuse sequences into HDR images");
    fs::path fu_ckpt, fu_manifest, fu_out;
    fu->add_option("--ckpt", fu_ckpt, "Checkpoint")->required();
    fu->add_option("--manifest", fu_manifest, "Manifest of sequences")->required();
    fu->add_option("--out", fu_out, "Output directory")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate PSNR against ground truth");
    fs::path ev_ckpt, ev_manifest, ev_out;
    ev->add_option("--ckpt", ev_ckpt, "Checkpoint")->required();
    ev->add_option("--manifest", ev_manifest, "Manifest of sequences")->required();
    ev->add_option("--out", ev_out, "Also write CSV here");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Train and compare cell variants");
    std::string ab_kinds =
        "sgm,type1,type2,type3,type4,type5,type6,type7,lstm,gru,vanilla";
    int ab_count = 4, ab_epochs = 2;
    std::int64_t ab_size = 32;
    fs::path ab_out;
    double ab_lr = 2e-4;
    int ab_batch = 4;
    ab->add_option("--kinds", ab_kinds, "Comma list of cell kinds");
    ab->add_option("--count", ab_count, "Fixture sequences");
    ab->add_option("--size", ab_size, "Fixture image size");
    ab->add_option("--epochs", ab_epochs, "Epochs per variant");
    ab->add_option("--lr", ab_lr, "Learning rate");
    ab->add_option("--batch", ab_batch, "Batch size");
    ab->add_option("--out", ab_out, "Write comparison table CSV here");
    ab->add_option("--precision", common.precision, "f32 or f64");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check");
    std::int64_t gc_size = 8;
    int gc_coords = 24;
    double gc_tol = 1e-4;
    gc->add_option("--cell", common.cell, "Cell kind");
    gc->add_option("--mode", common.mode, "uni or bi");
    gc->add_option("--size", gc_size, "Image size");
    gc->add_option("--coords", gc_coords,
                   "Coordinates checked per tensor (0 = all)");
    gc->add_option("--tolerance", gc_tol, "Max relative error");
    gc->add_option("--precision", common.precision, "f32 or f64");

    // inspect-ckpt
    auto* ins = app.add_subcommand("inspect-ckpt", "List checkpoint contents");
    fs::path ins_ckpt;
    ins->add_option("--ckpt", ins_ckpt, "Checkpoint")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        const bool f64 = common.precision == "f64";
        if (!f64 && common.precision != "f32")
            throw std::runtime_error("unknown precision " + common.precision);
        if (gen->parsed())
            return run_gen_data(common.seed, gen_out, gen_count, gen_n, gen_size,
                                gen_blobs, gen_amp, !gen_no_quant);
        if (tr->parsed()) {
            tr_cfg.seed = common.seed;
            tr_cfg.cell_kind = parse_cell_kind(common.cell);
            tr_cfg.mode = parse_mode(common.mode);
            tr_cfg.shuffle_exposure_order = tr_shuffle;
            if (!tr_varlen.empty())
                tr_cfg.variable_length_set = parse_lengths(tr_varlen);
            return f64 ? run_train<double>(tr_manifest, tr_ckpt, tr_metrics, tr_cfg)
                       : run_train<float>(tr_manifest, tr_ckpt, tr_metrics, tr_cfg);
        }
        if (fu->parsed()) {
            const int dtype = inspect_checkpoint(fu_ckpt).meta.dtype;
            return dtype == 1 ? run_fuse<double>(fu_ckpt, fu_manifest, fu_out)
                              : run_fuse<float>(fu_ckpt, fu_manifest, fu_out);
        }
        if (ev->parsed()) {
            const int dtype = inspect_checkpoint(ev_ckpt).meta.dtype;
            std::ostringstream csv;
            int rc = dtype == 1 ? run_eval<double>(ev_ckpt, ev_manifest, csv)
                                : run_eval<float>(ev_ckpt, ev_manifest, csv);
            std::cout << csv.str();
            if (!ev_out.empty()) {
                std::ofstream f(ev_out);
                f << csv.str();
            }
            return rc;
        }
        if (ab->parsed()) {
            std::stringstream ss(ab_kinds);
            std::vector<std::string> kinds;
            std::string item;
            while (std::getline(ss, item, ','))
                if (!item.empty()) kinds.push_back(item);
            TrainConfig cfg;
            cfg.seed = common.seed;
            cfg.mode = parse_mode(common.mode);
            cfg.epochs = ab_epochs;
            cfg.learning_rate = ab_lr;
            cfg.batch_size = ab_batch;
            cfg.patch_size = static_cast<int>(ab_size);
            return f64 ? run_ablate<double>(kinds, cfg, ab_count, ab_size, ab_out)
                       : run_ablate<float>(kinds, cfg, ab_count, ab_size, ab_out);
        }
        if (gc->parsed()) {
            CellKind kind = parse_cell_kind(common.cell);
            Mode mode = parse_mode(common.mode);
            return common.precision == "f32"
                       ? run_gradcheck<float>(kind, mode, common.seed, gc_size,
                                              gc_coords, gc_tol)
                       : run_gradcheck<double>(kind, mode, common.seed, gc_size,
                                               gc_coords, gc_tol);
        }
        if (ins->parsed()) return run_inspect(ins_ckpt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
