#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hadit {

struct ModelFlags {
    int d_model = 64;
    int heads = 4;
    int depth = 4;
    int grid = 16;
    int patch = 4;
    int rank = 4;
    double lora_scale = 1.0;
    std::string schedule = "cos";
    double lambda_base = 0.1;
    int pool_kernel = 4;
    bool no_hier = false;
    uint64_t seed = 1;
};

struct GenOptions {
    std::string out;
    int count = 100;
    uint64_t seed = 1;
    int canvas = 64;
    int prims_min = 4;
    int prims_max = 6;
    std::string motion = "large";
    bool sequence = false;
    int interval = 18;
    int min_matches = 25;
    bool antialias = false;
};

struct TrainOptions {
    std::string corpus;
    std::string out;
    std::string resume;  // checkpoint path to continue from
    ModelFlags model;
    int pretrain_steps = 200;
    int train_steps = 400;
    int batch_size = 1;
    int grad_accum = 1;
    int holdout = 0;
    int checkpoint_every = 0;
    double lr = 1e-3;
};

struct SampleOptions {
    std::string checkpoint;
    std::string line, ref;  // single-pair mode
    std::string corpus;     // batch mode over a corpus directory
    std::string out;        // output image (single) or directory (batch)
    int steps = 28;
    uint64_t seed = 1;
    int limit = 0;  // batch mode: 0 = all
    std::optional<std::string> schedule;
    std::optional<double> lambda_base;
    std::optional<int> pool_kernel;
    bool no_hier = false;
};

struct EvalOptions {
    std::string gen, gt, line;
    std::string out;  // metrics csv
    double threshold = 10.0;
    double line_threshold = 0.5;
    int jobs = 1;
};

struct SegmentOptions {
    std::string image, line;
    std::string out_viz;    // label visualization ppm
    std::string out_table;  // region table csv
    double threshold = 10.0;
    double line_threshold = 0.5;
    uint64_t seed = 1;
};

struct AblateOptions {
    std::string corpus;
    std::string out;
    std::vector<uint64_t> seeds{1, 2, 3};
    ModelFlags model;
    int pretrain_steps = 300;
    int train_steps = 500;
    int eval_steps = 12;
    int holdout = 32;
    int batch_size = 1;
    int grad_accum = 1;
    double lr = 1e-3;
    int jobs = 1;
};

int cmd_gen(const GenOptions& opts);
int cmd_train(const TrainOptions& opts);
int cmd_sample(const SampleOptions& opts);
int cmd_eval(const EvalOptions& opts);
int cmd_segment(const SegmentOptions& opts);
int cmd_ablate(const AblateOptions& opts);

}  // namespace hadit
