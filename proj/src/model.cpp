#include "hadit/model.hpp"

#include <cmath>
#include <stdexcept>

#include "hadit/rng.hpp"

namespace hadit {

namespace {
// seed-derivation tags
constexpr uint64_t kTagInit = 0x696e6974ull;    // "init"
constexpr uint64_t kTagLora = 0x6c6f7261ull;    // "lora"
constexpr uint64_t kTagNoise = 0x6e6f6973ull;   // "nois"
constexpr uint64_t kTagPool = 0x706b726eull;    // "pkrn"
constexpr uint64_t kTagSample = 0x73616d70ull;  // "samp"

void fill_gaussian(Mat& m, Rng& rng, double std) {
    for (double& v : m.v) v = rng.gaussian() * std;
}
}  // namespace

void ModelConfig::validate() const {
    if (d_model <= 0 || heads <= 0 || depth < 0 || grid <= 0 || patch <= 0)
        throw std::invalid_argument("model config: non-positive dimension");
    if (d_model % heads != 0)
        throw std::invalid_argument("model config: d_model not divisible by heads");
    if (3 * patch * patch > d_model)
        throw std::invalid_argument("model config: d_model must be >= 3*patch^2 for patchify");
    if (lora_rank <= 0) throw std::invalid_argument("model config: rank must be positive");
    if (lambda_base < 0.0) throw std::invalid_argument("model config: negative lambda_base");
}

FeatureGrid encode_from_image(const RgbImage& img, int patch, int d_model, Branch branch) {
    if (img.width % patch != 0 || img.height % patch != 0)
        throw std::invalid_argument("encode: image dimensions not divisible by patch size");
    if (3 * patch * patch > d_model)
        throw std::invalid_argument("encode: d_model too small for 3*patch^2 channels");
    FeatureGrid g(img.height / patch, img.width / patch, d_model, branch);
    for (int r = 0; r < g.rows; ++r)
        for (int c = 0; c < g.cols; ++c)
            for (int py = 0; py < patch; ++py)
                for (int px = 0; px < patch; ++px)
                    for (int ch = 0; ch < 3; ++ch)
                        g.at(r, c, (py * patch + px) * 3 + ch) =
                            img.channel(c * patch + px, r * patch + py, ch);
    return g;
}

RgbImage decode_to_image(const FeatureGrid& grid, int patch) {
    if (3 * patch * patch > grid.dim)
        throw std::invalid_argument("decode: grid dim too small for patch size");
    RgbImage img(grid.cols * patch, grid.rows * patch);
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c)
            for (int py = 0; py < patch; ++py)
                for (int px = 0; px < patch; ++px) {
                    uint8_t* p = img.px(c * patch + px, r * patch + py);
                    for (int ch = 0; ch < 3; ++ch) {
                        const double v = grid.at(r, c, (py * patch + px) * 3 + ch);
                        p[ch] = static_cast<uint8_t>(
                            std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
                    }
                }
    return img;
}

FeatureGrid forward_noising(const FeatureGrid& x0, const FeatureGrid& eps, double sigma) {
    if (!x0.same_shape(eps)) throw std::invalid_argument("forward_noising: shape mismatch");
    if (sigma < 0.0 || sigma > 1.0)
        throw std::invalid_argument("forward_noising: sigma outside [0,1]");
    FeatureGrid xt = x0;
    for (size_t i = 0; i < xt.data.size(); ++i)
        xt.data[i] = (1.0 - sigma) * x0.data[i] + sigma * eps.data[i];
    return xt;
}

Mat timestep_embedding(double sigma, int d_model) {
    Mat emb(1, d_model);
    const double tau = sigma * 1000.0;
    const int half = d_model / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
        emb.v[2 * i] = std::sin(tau * freq);
        emb.v[2 * i + 1] = std::cos(tau * freq);
    }
    return emb;
}

DitModel::DitModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    // Layout and positional encoding come straight from the token-space
    // assembly of three zero grids, so the model and the standalone ops agree
    // on branch order and position offsets.
    FeatureGrid zx(cfg_.grid, cfg_.grid, cfg_.d_model, Branch::Noisy);
    FeatureGrid zl(cfg_.grid, cfg_.grid, cfg_.d_model, Branch::LineArt);
    FeatureGrid zr(cfg_.grid, cfg_.grid, cfg_.d_model, Branch::Reference);
    const UnifiedSequence u = assemble(zx, zl, zr);
    layout_ = layout_of(u);
    pe_ = sinusoidal_pe(token_positions(u), cfg_.d_model);
    init_params();
}

void DitModel::init_params() {
    Rng rng(derive_seed(cfg_.seed, kTagInit));
    const int d = cfg_.d_model;
    const double ws = 1.0 / std::sqrt(static_cast<double>(d));

    auto add = [&](const std::string& name, int r, int c, double std) {
        Mat m(r, c);
        if (std > 0.0) fill_gaussian(m, rng, std);
        tensors_[name] = std::move(m);
    };

    // near-identity input embeddings: patchify latents already live in
    // d_model space, and a well-conditioned embedding keeps the velocity
    // head's regression easy
    for (const char* b : {"x", "line", "ref"}) {
        add(std::string("embed.") + b + ".w", d, d, 0.02);
        Mat& w = tensors_[std::string("embed.") + b + ".w"];
        for (int i = 0; i < d; ++i) w.at(i, i) += 1.0;
        add(std::string("embed.") + b + ".b", 1, d, 0.0);
    }
    for (int i = 0; i < cfg_.depth; ++i) {
        const std::string pre = "block" + std::to_string(i) + ".";
        add(pre + "ln1.g", 1, d, 0.0);
        tensors_[pre + "ln1.g"].fill(1.0);
        add(pre + "ln1.b", 1, d, 0.0);
        for (const char* w : {"wq", "wk", "wv", "wo"}) add(pre + "attn." + w, d, d, ws);
        // context-path projections start as copies of the vanilla ones
        tensors_[pre + "attn.wqc"] = tensors_[pre + "attn.wq"];
        tensors_[pre + "attn.wkc"] = tensors_[pre + "attn.wk"];
        add(pre + "ln2.g", 1, d, 0.0);
        tensors_[pre + "ln2.g"].fill(1.0);
        add(pre + "ln2.b", 1, d, 0.0);
        add(pre + "ffn.w1", d, 4 * d, ws);
        add(pre + "ffn.b1", 1, 4 * d, 0.0);
        add(pre + "ffn.w2", 4 * d, d, 1.0 / std::sqrt(4.0 * d));
        add(pre + "ffn.b2", 1, d, 0.0);
        // per-sublayer shift/scale/gate, DiT-block style; gates open at init
        add(pre + "tmod.w1", d, d, ws);
        add(pre + "tmod.b1", 1, d, 0.0);
        add(pre + "tmod.w2", d, 6 * d, 0.02);
        add(pre + "tmod.b2", 1, 6 * d, 0.0);
        Mat& tb2 = tensors_[pre + "tmod.b2"];
        for (int c = 0; c < d; ++c) {
            tb2.at(0, 2 * d + c) = 1.0;
            tb2.at(0, 5 * d + c) = 1.0;
        }
    }
    add("head.w", d, d, 0.0);  // zero-init velocity head
    add("head.b", 1, d, 0.0);

    for (const auto& [name, t] : tensors_) grads_[name] = Mat(t.rows, t.cols);
}

void DitModel::attach_lora() {
    if (adapted_) throw std::logic_error("attach_lora: adapters already attached");
    Rng rng(derive_seed(cfg_.seed, kTagLora));
    const int d = cfg_.d_model;
    const int r = cfg_.lora_rank;
    const double as = 1.0 / std::sqrt(static_cast<double>(d));
    for (int i = 0; i < cfg_.depth; ++i) {
        const std::string pre = "block" + std::to_string(i) + ".attn.";
        tensors_[pre + "wqc"] = tensors_[pre + "wq"];
        tensors_[pre + "wkc"] = tensors_[pre + "wk"];
        for (const char* w : {"wq", "wk", "wv", "wo", "wqc", "wkc"}) {
            Mat a(r, d);
            fill_gaussian(a, rng, as);
            tensors_[pre + w + ".lora_a"] = std::move(a);
            tensors_[pre + w + ".lora_b"] = Mat(d, r);  // zero: adapter is a no-op
        }
    }
    for (const auto& [name, t] : tensors_)
        if (grads_.count(name) == 0) grads_[name] = Mat(t.rows, t.cols);
    adapted_ = true;
}

std::vector<std::string> DitModel::tensor_names() const {
    std::vector<std::string> names;
    names.reserve(tensors_.size());
    for (const auto& [name, t] : tensors_) names.push_back(name);
    return names;
}

std::vector<std::string> DitModel::adapter_names() const {
    std::vector<std::string> names;
    for (const auto& [name, t] : tensors_)
        if (name.find(".lora_") != std::string::npos) names.push_back(name);
    return names;
}

std::vector<std::string> DitModel::trainable_names() const {
    if (adapted_) return adapter_names();
    std::vector<std::string> names;
    for (const auto& [name, t] : tensors_) {
        if (name.ends_with("attn.wqc") || name.ends_with("attn.wkc")) continue;
        names.push_back(name);
    }
    return names;
}

Mat& DitModel::tensor(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::out_of_range("no tensor named " + name);
    return it->second;
}

const Mat& DitModel::tensor(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw std::out_of_range("no tensor named " + name);
    return it->second;
}

Mat& DitModel::grad(const std::string& name) const {
    auto it = grads_.find(name);
    if (it == grads_.end()) throw std::out_of_range("no grad named " + name);
    return it->second;
}

void DitModel::zero_grads() const {
    for (auto& [name, g] : grads_) g.fill(0.0);
}

Mat DitModel::lora_update(const std::string& base) const {
    const Mat& a = tensor(base + ".lora_a");
    const Mat& b = tensor(base + ".lora_b");
    Mat upd = mm_nn(b, a);
    for (double& v : upd.v) v *= cfg_.lora_scale;
    return upd;
}

Graph::Id DitModel::effective_attn_weight(Graph& g, const std::string& base) const {
    Graph::Id w = g.param(&tensors_.at(base), &grads_.at(base));
    if (!adapted_) return w;
    Graph::Id a = g.param(&tensors_.at(base + ".lora_a"), &grads_.at(base + ".lora_a"));
    Graph::Id b = g.param(&tensors_.at(base + ".lora_b"), &grads_.at(base + ".lora_b"));
    return g.add(w, g.scale(g.matmul(b, a), cfg_.lora_scale));
}

Graph::Id DitModel::build_velocity(Graph& g, const Mat& xt, const Mat& line, const Mat& ref,
                                   const ForwardOpts& opts) const {
    const int d = cfg_.d_model;
    const int n = cfg_.grid * cfg_.grid;
    for (const Mat* m : {&xt, &line, &ref})
        if (m->rows != n || m->cols != d)
            throw std::invalid_argument("build_velocity: latent shape mismatch");

    auto P = [&](const std::string& name) {
        return g.param(&tensors_.at(name), &grads_.at(name));
    };
    auto embed = [&](const Mat& lat, const std::string& b) {
        return g.add_row(g.matmul(g.constant(lat), P("embed." + b + ".w")),
                         P("embed." + b + ".b"));
    };

    Graph::Id x = g.concat_rows({embed(xt, "x"), embed(line, "line"), embed(ref, "ref")});
    x = g.add(x, g.constant(pe_));
    Graph::Id temb = g.constant(timestep_embedding(opts.sigma, d));

    for (int i = 0; i < cfg_.depth; ++i) {
        const std::string pre = "block" + std::to_string(i) + ".";
        Graph::Id tm = g.add_row(
            g.matmul(g.silu(g.add_row(g.matmul(temb, P(pre + "tmod.w1")), P(pre + "tmod.b1"))),
                     P(pre + "tmod.w2")),
            P(pre + "tmod.b2"));
        Graph::Id s1 = g.slice_cols(tm, 0, d);
        Graph::Id b1 = g.slice_cols(tm, d, 2 * d);
        Graph::Id g1 = g.slice_cols(tm, 2 * d, 3 * d);
        Graph::Id s2 = g.slice_cols(tm, 3 * d, 4 * d);
        Graph::Id b2 = g.slice_cols(tm, 4 * d, 5 * d);
        Graph::Id g2 = g.slice_cols(tm, 5 * d, 6 * d);

        Graph::Id a_in =
            g.scale_shift_rows(g.layer_norm(x, P(pre + "ln1.g"), P(pre + "ln1.b")), s1, b1);
        AttnWeightNodes w;
        w.wq = effective_attn_weight(g, pre + "attn.wq");
        w.wk = effective_attn_weight(g, pre + "attn.wk");
        w.wv = effective_attn_weight(g, pre + "attn.wv");
        w.wo = effective_attn_weight(g, pre + "attn.wo");
        if (opts.use_context) {
            w.wqc = effective_attn_weight(g, pre + "attn.wqc");
            w.wkc = effective_attn_weight(g, pre + "attn.wkc");
        }
        Graph::Id attn = multihead_attention(g, a_in, layout_, cfg_.heads, w, opts.use_context,
                                             opts.kernel, opts.lambda);
        x = g.add(x, g.mul_row(attn, g1));

        Graph::Id f_in =
            g.scale_shift_rows(g.layer_norm(x, P(pre + "ln2.g"), P(pre + "ln2.b")), s2, b2);
        Graph::Id ffn = g.add_row(
            g.matmul(g.silu(g.add_row(g.matmul(f_in, P(pre + "ffn.w1")), P(pre + "ffn.b1"))),
                     P(pre + "ffn.w2")),
            P(pre + "ffn.b2"));
        x = g.add(x, g.mul_row(ffn, g2));

        if (!g.val(x).all_finite())
            throw std::runtime_error("non-finite activations in block " + std::to_string(i));
    }

    Graph::Id xb = g.slice_rows(x, 0, n);
    return g.add_row(g.matmul(xb, P("head.w")), P("head.b"));
}

FeatureGrid DitModel::predict_velocity(const FeatureGrid& xt, const FeatureGrid& line,
                                       const FeatureGrid& ref,
                                       int t, std::optional<int> total_steps) const {
    const int T = total_steps.value_or(cfg_.schedule_steps);
    ScheduleSpec spec = cfg_.schedule_spec();
    spec.total_steps = T;
    ForwardOpts opts;
    opts.sigma = static_cast<double>(t) / T;
    opts.use_context = cfg_.use_hier;
    opts.lambda = opts.use_context ? lambda_at(spec, t) : 0.0;
    opts.kernel = cfg_.pool_kernel;
    Graph g;
    Graph::Id v = build_velocity(g, flatten_grid(xt).tokens, flatten_grid(line).tokens,
                                 flatten_grid(ref).tokens, opts);
    FeatureGrid out(cfg_.grid, cfg_.grid, cfg_.d_model, Branch::Noisy);
    const Mat& vm = g.val(v);
    std::copy(vm.v.begin(), vm.v.end(), out.data.begin());
    return out;
}

void DitModel::restore(const ModelConfig& cfg, bool adapted, std::map<std::string, Mat> tensors) {
    *this = DitModel(cfg);
    adapted_ = adapted;
    tensors_ = std::move(tensors);
    grads_.clear();
    for (const auto& [name, t] : tensors_) grads_[name] = Mat(t.rows, t.cols);
}

void AdamOpt::step(DitModel& model, const std::vector<std::string>& names, double grad_scale) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& name : names) {
        Mat& theta = model.tensor(name);
        const Mat& gr = model.grad(name);
        Mat& m = m_[name];
        Mat& v = v_[name];
        if (m.size() == 0) m = Mat(theta.rows, theta.cols);
        if (v.size() == 0) v = Mat(theta.rows, theta.cols);
        for (size_t i = 0; i < theta.size(); ++i) {
            const double g = gr.v[i] * grad_scale;
            m.v[i] = beta1_ * m.v[i] + (1.0 - beta1_) * g;
            v.v[i] = beta2_ * v.v[i] + (1.0 - beta2_) * g * g;
            theta.v[i] -= lr_ * (m.v[i] / bc1) / (std::sqrt(v.v[i] / bc2) + eps_);
        }
    }
}

void AdamOpt::restore(uint64_t t, std::map<std::string, Mat> m, std::map<std::string, Mat> v) {
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

double training_step(const DitModel& model, const std::vector<const TrainItem*>& batch,
                     uint64_t seed, uint64_t step_index, bool pretrain) {
    if (batch.empty()) throw std::invalid_argument("training_step: empty batch");
    const ModelConfig& cfg = model.config();
    // one kernel draw per step, shared by all layers and batch items
    const int kernel =
        resolve_kernel(PoolSpec::random_per_step(derive_seed(seed, kTagPool)), step_index,
                       cfg.grid);
    const Mat zero(cfg.grid * cfg.grid, cfg.d_model);
    double total = 0.0;
    for (size_t bi = 0; bi < batch.size(); ++bi) {
        Rng rng(derive_seed(seed, kTagNoise, step_index * 0x10001ull + bi));
        // logit-normal noise-level sampling, the rectified-flow family's
        // training-time distribution over sigma
        const double sigma = 1.0 / (1.0 + std::exp(-rng.gaussian()));
        const TrainItem& item = *batch[bi];
        Mat eps(item.x0.rows, item.x0.cols);
        for (double& v : eps.v) v = rng.gaussian();
        Mat xt(item.x0.rows, item.x0.cols);
        Mat vtgt(item.x0.rows, item.x0.cols);
        for (size_t i = 0; i < xt.size(); ++i) {
            xt.v[i] = (1.0 - sigma) * item.x0.v[i] + sigma * eps.v[i];
            vtgt.v[i] = eps.v[i] - item.x0.v[i];
        }
        ForwardOpts opts;
        opts.sigma = sigma;
        opts.kernel = kernel;
        opts.use_context = pretrain ? false : cfg.use_hier;
        opts.lambda =
            opts.use_context ? lambda_at_sigma(cfg.schedule_spec(), sigma) : 0.0;
        Graph g;
        Graph::Id v = model.build_velocity(g, xt, pretrain ? zero : item.line,
                                           pretrain ? zero : item.ref, opts);
        Graph::Id loss = g.mse(v, g.constant(vtgt));
        const double l = g.val(loss).v[0];
        if (!std::isfinite(l))
            throw std::runtime_error("non-finite training loss at step " +
                                     std::to_string(step_index) + " (batch item " +
                                     std::to_string(bi) + ", sigma " + std::to_string(sigma) +
                                     ")");
        // seed backward with 1/batch so accumulated grads match the mean loss
        g.backward(g.scale(loss, 1.0 / static_cast<double>(batch.size())));
        total += l;
    }
    return total / static_cast<double>(batch.size());
}

Mat sample_latent(const DitModel& model, const Mat& line_lat, const Mat& ref_lat,
                  const SampleOpts& opts) {
    if (opts.steps < 1) throw std::invalid_argument("sample: steps must be >= 1");
    const ModelConfig& cfg = model.config();
    const int n = cfg.grid * cfg.grid;
    Rng rng(derive_seed(opts.seed, kTagSample));
    Mat x(n, cfg.d_model);
    for (double& v : x.v) v = rng.gaussian();

    ScheduleSpec spec{opts.schedule.value_or(cfg.schedule),
                      opts.lambda_base.value_or(cfg.lambda_base), opts.steps};
    const int kernel =
        resolve_kernel(PoolSpec::fixed(opts.pool_kernel.value_or(cfg.pool_kernel)), 0, cfg.grid);

    const double h = 1.0 / opts.steps;
    for (int i = 0; i < opts.steps; ++i) {
        const double sigma = 1.0 - static_cast<double>(i) / opts.steps;
        const int t = opts.steps - i;  // integer timestep; t/T == sigma
        ForwardOpts fo;
        fo.sigma = sigma;
        fo.use_context = cfg.use_hier;
        fo.lambda = fo.use_context ? lambda_at(spec, t) : 0.0;
        fo.kernel = kernel;
        Graph g;
        Graph::Id v = model.build_velocity(g, x, line_lat, ref_lat, fo);
        const Mat& vm = g.val(v);
        for (size_t j = 0; j < x.size(); ++j) x.v[j] -= h * vm.v[j];
    }
    return x;
}

RgbImage sample_image(const DitModel& model, const RgbImage& line, const RgbImage& ref,
                      const SampleOpts& opts) {
    const ModelConfig& cfg = model.config();
    if (line.width != cfg.image_side() || line.height != cfg.image_side() ||
        ref.width != cfg.image_side() || ref.height != cfg.image_side())
        throw std::invalid_argument("sample: conditioning images must be " +
                                    std::to_string(cfg.image_side()) + "x" +
                                    std::to_string(cfg.image_side()));
    const Mat line_lat =
        flatten_grid(encode_from_image(line, cfg.patch, cfg.d_model, Branch::LineArt)).tokens;
    const Mat ref_lat =
        flatten_grid(encode_from_image(ref, cfg.patch, cfg.d_model, Branch::Reference)).tokens;
    const Mat out = sample_latent(model, line_lat, ref_lat, opts);
    FeatureGrid grid(cfg.grid, cfg.grid, cfg.d_model, Branch::Noisy);
    std::copy(out.v.begin(), out.v.end(), grid.data.begin());
    return decode_to_image(grid, cfg.patch);
}

}  // namespace hadit
