#include "segcrowd/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

namespace segcrowd {

std::size_t ModelConfig::min_input_extent() const {
    std::size_t max_level = 1;
    for (auto l : spp_levels) max_level = std::max(max_level, l);
    return std::max<std::size_t>(4, output_stride * max_level);
}

Tensor& ModelParams::at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end())
        throw std::out_of_range("ModelParams: no parameter named '" + name + "'");
    return it->second;
}

const Tensor& ModelParams::at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end())
        throw std::out_of_range("ModelParams: no parameter named '" + name + "'");
    return it->second;
}

void ModelParams::zero_grad() {
    for (auto& [name, t] : tensors) t.zero_grad();
}

namespace {

void validate(const ModelConfig& c) {
    if (c.branch_filters == 0 || c.fc_hidden == 0 || c.num_classes == 0 ||
        c.in_channels == 0 || c.shared_repeats == 0)
        throw std::invalid_argument("ModelConfig: zero-sized component");
    if (c.spp_levels.empty())
        throw std::invalid_argument("ModelConfig: spp_levels empty");
    for (auto k : c.branch_kernels)
        if (k % 2 == 0)
            throw std::invalid_argument("ModelConfig: branch kernel " +
                                        std::to_string(k) + " must be odd");
}

std::size_t spp_bins(const ModelConfig& c) {
    std::size_t b = 0;
    for (auto l : c.spp_levels) b += l * l;
    return b;
}

}  // namespace

ModelParams build(const ModelConfig& config) {
    validate(config);
    ModelParams p;
    p.config = config;
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> gauss(0.0, 0.01);

    auto add = [&](const std::string& name, std::vector<std::size_t> dims,
                   bool random) {
        Tensor t(std::move(dims));
        if (random)
            for (auto& v : t.values()) v = gauss(rng);
        t.set_requires_grad();
        p.tensors.emplace(name, std::move(t));
    };

    const std::size_t F = config.branch_filters;
    const std::size_t C4 = 4 * F;
    for (std::size_t i = 0; i < 4; ++i) {
        const std::size_t k = config.branch_kernels[i];
        add("branch" + std::to_string(i) + ".w", {F, config.in_channels, k, k}, true);
        add("branch" + std::to_string(i) + ".b", {F}, false);
    }
    add("blockA.w", {C4, C4, 3, 3}, true);
    add("blockA.b", {C4}, false);
    add("shared.w", {C4, C4, 3, 3}, true);
    add("shared.b", {C4}, false);
    add("seg1.w", {F, C4, 3, 3}, true);
    add("seg1.b", {F}, false);
    add("seg2.w", {1, F, 1, 1}, true);
    add("seg2.b", {1}, false);
    add("den1.w", {F, C4, 3, 3}, true);
    add("den1.b", {F}, false);
    add("den2.w", {1, F, 1, 1}, true);
    add("den2.b", {1}, false);
    add("fuse1.w", {F, 1, 3, 3}, true);
    add("fuse1.b", {F}, false);
    add("fuse2.w", {1, F, 1, 1}, true);
    add("fuse2.b", {1}, false);
    add("fc1.w", {config.fc_hidden, spp_bins(config) * C4}, true);
    add("fc1.b", {config.fc_hidden}, false);
    add("fc1.slope", {1}, false);
    p.at("fc1.slope").values()[0] = 0.25;
    add("fc2.w", {config.num_classes, config.fc_hidden}, true);
    add("fc2.b", {config.num_classes}, false);
    return p;
}

ForwardOutput forward(const ModelParams& params, const Tensor& image) {
    const ModelConfig& c = params.config;
    if (image.rank() != 3 || image.dims()[0] != c.in_channels)
        throw std::invalid_argument("forward: expected (" + std::to_string(c.in_channels) +
                                    ",H,W) image, got " + dims_to_string(image.dims()));
    const std::size_t min = c.min_input_extent();
    if (image.dims()[1] < min || image.dims()[2] < min)
        throw std::invalid_argument(
            "forward: input " + dims_to_string(image.dims()) + " below minimum extent " +
            std::to_string(min) + " (two 2x2 pools + SPP level " +
            std::to_string(min / ModelConfig::output_stride) + ")");

    const std::size_t F = c.branch_filters;
    const std::size_t C4 = 4 * F;

    auto conv = [&](const Tensor& x, const std::string& layer, std::size_t kernel,
                    std::size_t in_ch, std::size_t out_ch, std::size_t dilation) {
        ConvSpec spec;
        spec.kernel_h = spec.kernel_w = kernel;
        spec.in_channels = in_ch;
        spec.out_channels = out_ch;
        spec.dilation = dilation;
        spec.padding = dilation * (kernel / 2);  // size-preserving
        return conv2d(x, spec, params.at(layer + ".w"), params.at(layer + ".b"));
    };

    // multi-receptive-field branches -> channel concat
    std::vector<Tensor> branches;
    for (std::size_t i = 0; i < 4; ++i)
        branches.push_back(relu(conv(image, "branch" + std::to_string(i),
                                     c.branch_kernels[i], c.in_channels, F, 1)));
    Tensor x = concat_channels(branches);

    x = max_pool2d(x);
    x = relu(conv(x, "blockA", 3, C4, C4, 1));
    x = max_pool2d(x);

    // weight-tied dilated block, applied shared_repeats times; fuse every
    // depth by element-wise add
    Tensor fused = x;
    Tensor cur = x;
    for (std::size_t i = 0; i < c.shared_repeats; ++i) {
        cur = relu(conv(cur, "shared", 3, C4, C4, c.shared_dilation));
        fused = add_elementwise(fused, cur);
    }

    ForwardOutput out;

    // classification head: SPP -> FC -> PReLU -> FC
    Tensor feat = spp(fused, c.spp_levels);
    Tensor h = fully_connected(feat, params.at("fc1.w"), params.at("fc1.b"));
    h = prelu(h, params.at("fc1.slope"));
    out.class_logits = fully_connected(h, params.at("fc2.w"), params.at("fc2.b"));

    // segmentation head
    Tensor s = relu(conv(fused, "seg1", 3, C4, F, 1));
    out.seg_map = sigmoid(conv(s, "seg2", 1, F, 1, 1));

    // density head with intermediate supervision output
    Tensor d = relu(conv(fused, "den1", 3, C4, F, 1));
    out.density_intermediate = relu(conv(d, "den2", 1, F, 1, 1));

    // attention fusion: seg map added into the density pathway
    Tensor a = add_elementwise(out.seg_map, out.density_intermediate);
    a = relu(conv(a, "fuse1", 3, 1, F, 1));
    out.density_final = relu(conv(a, "fuse2", 1, F, 1, 1));
    return out;
}

double count_from_density(const Grid& density) { return density.sum(); }

Tensor image_to_tensor(const Grid& pixels) {
    return Tensor::from({1, pixels.rows, pixels.cols}, pixels.data);
}

Grid map_to_grid(const Tensor& map) {
    Grid g(map.dims()[1], map.dims()[2]);
    g.data = map.values();
    return g;
}

namespace {

constexpr char kMagic[4] = {'S', 'C', 'N', 'W'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_le(std::ostream& os, T v) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    unsigned char buf[sizeof(T)];
    is.read(reinterpret_cast<char*>(buf), sizeof(T));
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

void write_record(std::ostream& os, const std::string& name,
                  const std::vector<std::size_t>& dims,
                  const std::vector<double>& values) {
    write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_le<std::uint8_t>(os, static_cast<std::uint8_t>(dims.size()));
    for (auto d : dims) write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (double v : values) write_le<double>(os, v);
}

std::vector<double> to_doubles(const std::vector<std::size_t>& xs) {
    return {xs.begin(), xs.end()};
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    os.write(kMagic, 4);
    write_le<std::uint32_t>(os, kVersion);
    const ModelConfig& c = params.config;
    write_record(os, "cfg.branch_kernels", {4},
                 to_doubles({c.branch_kernels.begin(), c.branch_kernels.end()}));
    write_record(os, "cfg.branch_filters", {1}, {double(c.branch_filters)});
    write_record(os, "cfg.spp_levels", {c.spp_levels.size()}, to_doubles(c.spp_levels));
    write_record(os, "cfg.fc_hidden", {1}, {double(c.fc_hidden)});
    write_record(os, "cfg.num_classes", {1}, {double(c.num_classes)});
    write_record(os, "cfg.shared_repeats", {1}, {double(c.shared_repeats)});
    write_record(os, "cfg.shared_dilation", {1}, {double(c.shared_dilation)});
    write_record(os, "cfg.in_channels", {1}, {double(c.in_channels)});
    write_record(os, "cfg.seed", {1}, {double(c.seed)});
    for (const auto& [name, t] : params.tensors)
        write_record(os, name, t.dims(), t.values());
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    const auto version = read_le<std::uint32_t>(is);
    if (version != kVersion)
        throw std::runtime_error("load_checkpoint: unsupported version " +
                                 std::to_string(version));

    std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<double>>> records;
    while (true) {
        const auto name_len = read_le<std::uint16_t>(is);
        if (is.eof() || !is) break;
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        const auto rank = read_le<std::uint8_t>(is);
        std::vector<std::size_t> dims(rank);
        std::size_t n = 1;
        for (auto& d : dims) n *= (d = read_le<std::uint32_t>(is));
        std::vector<double> values(n);
        for (auto& v : values) v = read_le<double>(is);
        if (!is) throw std::runtime_error("load_checkpoint: truncated record '" + name + "'");
        records[name] = {std::move(dims), std::move(values)};
    }

    auto cfg_vec = [&](const std::string& key) {
        auto it = records.find(key);
        if (it == records.end())
            throw std::runtime_error("load_checkpoint: missing " + key);
        auto vals = it->second.second;
        records.erase(it);
        return vals;
    };
    ModelConfig c;
    auto bk = cfg_vec("cfg.branch_kernels");
    for (std::size_t i = 0; i < 4; ++i) c.branch_kernels[i] = std::size_t(bk[i]);
    c.branch_filters = std::size_t(cfg_vec("cfg.branch_filters")[0]);
    c.spp_levels.clear();
    for (double v : cfg_vec("cfg.spp_levels")) c.spp_levels.push_back(std::size_t(v));
    c.fc_hidden = std::size_t(cfg_vec("cfg.fc_hidden")[0]);
    c.num_classes = std::size_t(cfg_vec("cfg.num_classes")[0]);
    c.shared_repeats = std::size_t(cfg_vec("cfg.shared_repeats")[0]);
    c.shared_dilation = std::size_t(cfg_vec("cfg.shared_dilation")[0]);
    c.in_channels = std::size_t(cfg_vec("cfg.in_channels")[0]);
    c.seed = std::uint64_t(cfg_vec("cfg.seed")[0]);

    ModelParams p;
    p.config = c;
    for (auto& [name, rec] : records) {
        Tensor t = Tensor::from(rec.first, std::move(rec.second));
        t.set_requires_grad();
        p.tensors.emplace(name, std::move(t));
    }
    return p;
}

}  // namespace segcrowd
