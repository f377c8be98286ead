// hadit - hierarchical-attention diffusion transformer toy for
// reference-guided line art colorization: corpus generation, training,
// sampling, metrics, and the ablation harness in one binary.
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hadit/commands.hpp"

namespace {

void add_model_flags(CLI::App* cmd, hadit::ModelFlags& m) {
    cmd->add_option("--d-model", m.d_model, "embedding width");
    cmd->add_option("--heads", m.heads, "attention heads");
    cmd->add_option("--depth", m.depth, "transformer blocks");
    cmd->add_option("--grid", m.grid, "latent grid side N (image side = N*patch)");
    cmd->add_option("--patch", m.patch, "patchify size");
    cmd->add_option("--rank", m.rank, "low-rank adapter rank");
    cmd->add_option("--lora-scale", m.lora_scale, "adapter update scale");
    cmd->add_option("--schedule", m.schedule, "blend weight schedule")
        ->check(CLI::IsMember({"cos", "sin", "cosinv", "const"}));
    cmd->add_option("--lambda-base", m.lambda_base, "maximum blend weight");
    cmd->add_option("--pool-kernel", m.pool_kernel, "inference pool kernel")
        ->check(CLI::IsMember({1, 2, 4, 8}));
    cmd->add_flag("--no-hier", m.no_hier, "disable the context-attention path");
    cmd->add_option("--seed", m.seed, "run seed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical-attention DiT toy: line-art colorization sandbox"};
    app.require_subcommand(1);
    app.set_config("--config", "", "flat key=value config file");

    hadit::GenOptions gen;
    auto* cgen = app.add_subcommand("gen", "generate a synthetic triplet corpus");
    cgen->add_option("--out", gen.out, "output directory")->required();
    cgen->add_option("--count", gen.count, "number of triplets");
    cgen->add_option("--seed", gen.seed, "corpus seed");
    cgen->add_option("--canvas", gen.canvas, "image side in px");
    cgen->add_option("--prims-min", gen.prims_min, "min primitives per scene");
    cgen->add_option("--prims-max", gen.prims_max, "max primitives per scene");
    cgen->add_option("--motion", gen.motion, "pose displacement preset")
        ->check(CLI::IsMember({"small", "large"}));
    cgen->add_flag("--sequence", gen.sequence,
                   "build pairs via interval-reduction over frame sequences");
    cgen->add_option("--interval", gen.interval, "starting frame interval");
    cgen->add_option("--min-matches", gen.min_matches, "keypoint match threshold");
    cgen->add_flag("--aa", gen.antialias, "antialiased rendering (stress mode)");

    hadit::TrainOptions train;
    auto* ctrain = app.add_subcommand("train", "pretrain base + adapter fine-tune");
    ctrain->add_option("--corpus", train.corpus, "corpus directory")->required();
    ctrain->add_option("--out", train.out, "output directory")->required();
    ctrain->add_option("--resume", train.resume, "checkpoint to continue fine-tuning from");
    add_model_flags(ctrain, train.model);
    ctrain->add_option("--pretrain-steps", train.pretrain_steps, "unconditional base steps");
    ctrain->add_option("--train-steps", train.train_steps, "adapter fine-tune steps");
    ctrain->add_option("--batch-size", train.batch_size, "samples per step");
    ctrain->add_option("--grad-accum", train.grad_accum, "optimizer step every k steps");
    ctrain->add_option("--holdout", train.holdout, "trailing samples excluded from training");
    ctrain->add_option("--checkpoint-every", train.checkpoint_every,
                       "checkpoint every k fine-tune steps");
    ctrain->add_option("--lr", train.lr, "learning rate");

    hadit::SampleOptions sample;
    auto* csample = app.add_subcommand("sample", "denoise images from line art + reference");
    csample->add_option("--checkpoint", sample.checkpoint, "model checkpoint")->required();
    csample->add_option("--line", sample.line, "line art image (single-pair mode)");
    csample->add_option("--ref", sample.ref, "reference image (single-pair mode)");
    csample->add_option("--corpus", sample.corpus, "corpus directory (batch mode)");
    csample->add_option("--out", sample.out, "output image or directory")->required();
    csample->add_option("--steps", sample.steps, "denoising steps");
    csample->add_option("--seed", sample.seed, "noise seed");
    csample->add_option("--limit", sample.limit, "batch mode: sample first k rows only");
    std::string sched_override;
    double lb_override = -1.0;
    int pk_override = 0;
    csample->add_option("--schedule", sched_override, "override checkpoint schedule")
        ->check(CLI::IsMember({"cos", "sin", "cosinv", "const"}));
    csample->add_option("--lambda-base", lb_override, "override maximum blend weight");
    csample->add_option("--pool-kernel", pk_override, "override inference pool kernel");
    csample->add_flag("--no-hier", sample.no_hier, "disable the context-attention path");

    hadit::EvalOptions eval;
    auto* ceval = app.add_subcommand("eval", "PSNR/SSIM/MSE_CR over paired directories");
    ceval->add_option("--gen", eval.gen, "generated images directory")->required();
    ceval->add_option("--gt", eval.gt, "ground-truth directory (corpus dir or plain)")
        ->required();
    ceval->add_option("--line", eval.line, "line art directory (defaults to --gt)");
    ceval->add_option("--out", eval.out, "metrics csv path")->required();
    ceval->add_option("--threshold", eval.threshold, "deltaE merge threshold");
    ceval->add_option("--line-threshold", eval.line_threshold, "line luminance threshold");
    ceval->add_option("--jobs", eval.jobs, "worker threads");

    hadit::SegmentOptions segment;
    auto* cseg = app.add_subcommand("segment-regions", "color-region segmentation of one image");
    cseg->add_option("--image", segment.image, "ground-truth image")->required();
    cseg->add_option("--line", segment.line, "matching line art")->required();
    cseg->add_option("--out-viz", segment.out_viz, "label visualization ppm");
    cseg->add_option("--out-table", segment.out_table, "region table csv");
    cseg->add_option("--threshold", segment.threshold, "deltaE merge threshold");
    cseg->add_option("--line-threshold", segment.line_threshold, "line luminance threshold");
    cseg->add_option("--seed", segment.seed, "visualization color seed");

    hadit::AblateOptions ablate;
    auto* cablate = app.add_subcommand("ablate", "train + evaluate all ablation arms");
    cablate->add_option("--corpus", ablate.corpus, "corpus directory")->required();
    cablate->add_option("--out", ablate.out, "report directory")->required();
    cablate->add_option("--seeds", ablate.seeds, "training seeds")->delimiter(',');
    add_model_flags(cablate, ablate.model);
    cablate->add_option("--pretrain-steps", ablate.pretrain_steps, "base steps per seed");
    cablate->add_option("--train-steps", ablate.train_steps, "fine-tune steps per arm");
    cablate->add_option("--eval-steps", ablate.eval_steps, "denoising steps for evaluation");
    cablate->add_option("--holdout", ablate.holdout, "held-out triplets for evaluation");
    cablate->add_option("--batch-size", ablate.batch_size, "samples per step");
    cablate->add_option("--grad-accum", ablate.grad_accum, "optimizer step every k steps");
    cablate->add_option("--lr", ablate.lr, "learning rate");
    cablate->add_option("--jobs", ablate.jobs, "worker threads");

    CLI11_PARSE(app, argc, argv);

    try {
        if (cgen->parsed()) return hadit::cmd_gen(gen);
        if (ctrain->parsed()) return hadit::cmd_train(train);
        if (csample->parsed()) {
            if (!sched_override.empty()) sample.schedule = sched_override;
            if (csample->count("--lambda-base") > 0) sample.lambda_base = lb_override;
            if (csample->count("--pool-kernel") > 0) sample.pool_kernel = pk_override;
            return hadit::cmd_sample(sample);
        }
        if (ceval->parsed()) return hadit::cmd_eval(eval);
        if (cseg->parsed()) return hadit::cmd_segment(segment);
        if (cablate->parsed()) return hadit::cmd_ablate(ablate);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
