#include "hadit/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hadit {

namespace {

constexpr char kMagic[8] = {'H', 'A', 'D', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& f, uint32_t v) { f.write(reinterpret_cast<char*>(&v), 4); }
void write_u64(std::ostream& f, uint64_t v) { f.write(reinterpret_cast<char*>(&v), 8); }
uint32_t read_u32(std::istream& f) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
uint64_t read_u64(std::istream& f) {
    uint64_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 8);
    return v;
}

void write_string(std::ostream& f, const std::string& s) {
    write_u32(f, static_cast<uint32_t>(s.size()));
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& f) {
    const uint32_t n = read_u32(f);
    std::string s(n, '\0');
    f.read(s.data(), n);
    return s;
}

void write_tensor_map(std::ostream& f, const std::map<std::string, Mat>& tensors) {
    write_u32(f, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        write_string(f, name);
        write_u32(f, static_cast<uint32_t>(t.rows));
        write_u32(f, static_cast<uint32_t>(t.cols));
        f.write(reinterpret_cast<const char*>(t.v.data()),
                static_cast<std::streamsize>(t.v.size() * sizeof(double)));
    }
}

std::map<std::string, Mat> read_tensor_map(std::istream& f) {
    std::map<std::string, Mat> tensors;
    const uint32_t count = read_u32(f);
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = read_string(f);
        const int rows = static_cast<int>(read_u32(f));
        const int cols = static_cast<int>(read_u32(f));
        Mat t(rows, cols);
        f.read(reinterpret_cast<char*>(t.v.data()),
               static_cast<std::streamsize>(t.v.size() * sizeof(double)));
        tensors[name] = std::move(t);
    }
    return tensors;
}

std::string config_text(const ModelConfig& c, bool adapted) {
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "d_model=%d\nheads=%d\ndepth=%d\ngrid=%d\npatch=%d\nlora_rank=%d\n"
                  "lora_scale=%.17g\nschedule=%s\nlambda_base=%.17g\nschedule_steps=%d\n"
                  "pool_kernel=%d\nuse_hier=%d\nseed=%llu\nadapted=%d\n",
                  c.d_model, c.heads, c.depth, c.grid, c.patch, c.lora_rank, c.lora_scale,
                  schedule_kind_name(c.schedule), c.lambda_base, c.schedule_steps,
                  c.pool_kernel, c.use_hier ? 1 : 0, static_cast<unsigned long long>(c.seed),
                  adapted ? 1 : 0);
    return buf;
}

void parse_config_text(const std::string& text, ModelConfig& c, bool& adapted) {
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "d_model") c.d_model = std::stoi(val);
        else if (key == "heads") c.heads = std::stoi(val);
        else if (key == "depth") c.depth = std::stoi(val);
        else if (key == "grid") c.grid = std::stoi(val);
        else if (key == "patch") c.patch = std::stoi(val);
        else if (key == "lora_rank") c.lora_rank = std::stoi(val);
        else if (key == "lora_scale") c.lora_scale = std::stod(val);
        else if (key == "schedule") c.schedule = parse_schedule_kind(val);
        else if (key == "lambda_base") c.lambda_base = std::stod(val);
        else if (key == "schedule_steps") c.schedule_steps = std::stoi(val);
        else if (key == "pool_kernel") c.pool_kernel = std::stoi(val);
        else if (key == "use_hier") c.use_hier = val == "1";
        else if (key == "seed") c.seed = std::stoull(val);
        else if (key == "adapted") adapted = val == "1";
        else throw std::runtime_error("checkpoint: unknown config key '" + key + "'");
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const DitModel& model, uint64_t step,
                     const AdamOpt* opt) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f.write(kMagic, sizeof(kMagic));
    write_u32(f, kVersion);
    write_string(f, config_text(model.config(), model.adapted()));
    write_u64(f, step);
    write_tensor_map(f, model.tensors());
    f.put(opt ? 1 : 0);
    if (opt) {
        write_u64(f, opt->t());
        write_tensor_map(f, opt->m_state());
        write_tensor_map(f, opt->v_state());
    }
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    f.read(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    const uint32_t version = read_u32(f);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    CheckpointData data;
    parse_config_text(read_string(f), data.config, data.adapted);
    data.step = read_u64(f);
    data.tensors = read_tensor_map(f);
    data.has_optimizer = f.get() == 1;
    if (data.has_optimizer) {
        data.opt_t = read_u64(f);
        data.opt_m = read_tensor_map(f);
        data.opt_v = read_tensor_map(f);
    }
    if (!f) throw std::runtime_error("truncated checkpoint: " + path);
    return data;
}

DitModel model_from_checkpoint(const CheckpointData& data) {
    DitModel model;
    model.restore(data.config, data.adapted, data.tensors);
    return model;
}

}  // namespace hadit
