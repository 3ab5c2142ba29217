#include "emorank/extractor.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "emorank/binary_io.h"
#include "emorank/error.h"

namespace emorank {

using nlohmann::json;

std::size_t ExtractorConfig::class_index(const std::string& name) const {
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] == name) {
            return i;
        }
    }
    fail(ErrorKind::kInvalidArgument, "unknown emotion class '" + name + "'");
}

void ExtractorConfig::validate() const {
    require(input_dim >= 1, ErrorKind::kInvalidArgument, "extractor.input_dim must be >= 1");
    require(hidden_dim >= 1 && n_heads >= 1, ErrorKind::kInvalidArgument, "extractor.hidden_dim/n_heads must be >= 1");
    require(hidden_dim % n_heads == 0, ErrorKind::kInvalidArgument,
            "extractor.hidden_dim (" + std::to_string(hidden_dim) + ") must be divisible by n_heads (" +
                std::to_string(n_heads) + ")");
    require(conv_kernel >= 1 && conv_filter_dim >= 1 && projector_hidden >= 1, ErrorKind::kInvalidArgument,
            "extractor conv/projector sizes must be >= 1");
    require(dropout >= 0.0 && dropout < 1.0, ErrorKind::kInvalidArgument, "extractor.dropout must be in [0, 1)");
    require(classes.size() >= 2, ErrorKind::kInvalidArgument, "need at least 2 emotion classes");
    require(neutral_class < classes.size(), ErrorKind::kInvalidArgument, "neutral_class out of range");
    std::set<std::string> uniq(classes.begin(), classes.end());
    require(uniq.size() == classes.size(), ErrorKind::kInvalidArgument, "duplicate emotion class names");
}

json ExtractorConfig::to_json() const {
    return json{{"input_dim", input_dim},
                {"hidden_dim", hidden_dim},
                {"n_fft_blocks", n_fft_blocks},
                {"n_heads", n_heads},
                {"conv_kernel", conv_kernel},
                {"conv_filter_dim", conv_filter_dim},
                {"dropout", dropout},
                {"projector_hidden", projector_hidden},
                {"classes", classes},
                {"neutral_class", neutral_class}};
}

ExtractorConfig ExtractorConfig::from_json(const json& j) {
    require(j.is_object(), ErrorKind::kInvalidArgument, "extractor config must be a JSON object");
    ExtractorConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        try {
            if (k == "input_dim") c.input_dim = it->get<std::size_t>();
            else if (k == "hidden_dim") c.hidden_dim = it->get<std::size_t>();
            else if (k == "n_fft_blocks") c.n_fft_blocks = it->get<std::size_t>();
            else if (k == "n_heads") c.n_heads = it->get<std::size_t>();
            else if (k == "conv_kernel") c.conv_kernel = it->get<std::size_t>();
            else if (k == "conv_filter_dim") c.conv_filter_dim = it->get<std::size_t>();
            else if (k == "dropout") c.dropout = it->get<double>();
            else if (k == "projector_hidden") c.projector_hidden = it->get<std::size_t>();
            else if (k == "classes") c.classes = it->get<std::vector<std::string>>();
            else if (k == "neutral_class") c.neutral_class = it->get<std::size_t>();
            else fail(ErrorKind::kInvalidArgument, "unknown extractor config key '" + k + "'");
        } catch (const json::exception& e) {
            fail(ErrorKind::kInvalidArgument, "extractor config key '" + k + "': " + e.what());
        }
    }
    c.validate();
    return c;
}

Tensor& ModelParams::get(const std::string& name) {
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) {
            return tensors[i];
        }
    }
    fail(ErrorKind::kInvalidArgument, "no parameter named '" + name + "'");
}

const Tensor& ModelParams::get(const std::string& name) const { return const_cast<ModelParams&>(*this).get(name); }

std::vector<Tensor*> ModelParams::trainable() {
    std::vector<Tensor*> out;
    for (auto& t : tensors) {
        out.push_back(&t);
    }
    return out;
}

std::size_t ModelParams::parameter_count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) {
        n += t.size();
    }
    return n;
}

std::vector<std::pair<std::string, std::vector<std::size_t>>> parameter_layout(const ExtractorConfig& cfg) {
    const std::size_t h = cfg.hidden_dim;
    const std::size_t f = cfg.conv_filter_dim;
    std::vector<std::pair<std::string, std::vector<std::size_t>>> out = {
        {"input.weight", {cfg.input_dim, h}},
        {"input.bias", {h}},
    };
    for (std::size_t b = 0; b < cfg.n_fft_blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        for (const char* m : {"q", "k", "v", "o"}) {
            out.push_back({p + "attn." + m + ".weight", {h, h}});
            out.push_back({p + "attn." + m + ".bias", {h}});
        }
        out.push_back({p + "ln1.gain", {h}});
        out.push_back({p + "ln1.bias", {h}});
        out.push_back({p + "conv1.weight", {cfg.conv_kernel, h, f}});
        out.push_back({p + "conv1.bias", {f}});
        out.push_back({p + "conv2.weight", {1, f, h}});
        out.push_back({p + "conv2.bias", {h}});
        out.push_back({p + "ln2.gain", {h}});
        out.push_back({p + "ln2.bias", {h}});
    }
    out.push_back({"emotion.embedding", {cfg.n_emotion_classes(), h}});
    out.push_back({"classifier.weight", {h, cfg.n_emotion_classes()}});
    out.push_back({"classifier.bias", {cfg.n_emotion_classes()}});
    out.push_back({"projector.fc1.weight", {h, cfg.projector_hidden}});
    out.push_back({"projector.fc1.bias", {cfg.projector_hidden}});
    out.push_back({"projector.fc2.weight", {cfg.projector_hidden, 1}});
    out.push_back({"projector.fc2.bias", {1}});
    return out;
}

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Fan-in of the layer a parameter belongs to.
std::size_t fan_in_of(const std::string& name, const ExtractorConfig& cfg) {
    if (name.rfind("input.", 0) == 0) return cfg.input_dim;
    if (name.find(".conv1.") != std::string::npos) return cfg.conv_kernel * cfg.hidden_dim;
    if (name.find(".conv2.") != std::string::npos) return cfg.conv_filter_dim;
    if (name.rfind("projector.fc2.", 0) == 0) return cfg.projector_hidden;
    return cfg.hidden_dim;
}

}  // namespace

ModelParams init_params(const ExtractorConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    ModelParams p;
    for (const auto& [name, shape] : parameter_layout(cfg)) {
        Tensor t(shape, 0.0);
        if (ends_with(name, ".gain")) {
            std::fill(t.data.begin(), t.data.end(), 1.0);
        } else if (name.find(".ln") != std::string::npos) {
            // layer-norm bias stays zero
        } else if (name == "emotion.embedding") {
            std::normal_distribution<double> n(0.0, 0.01);
            for (auto& v : t.data) v = n(rng);
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in_of(name, cfg)));
            std::uniform_real_distribution<double> u(-bound, bound);
            for (auto& v : t.data) v = u(rng);
        }
        p.names.push_back(name);
        p.tensors.push_back(std::move(t));
    }
    p.norm_mean = Tensor({cfg.input_dim}, 0.0);
    p.norm_std = Tensor({cfg.input_dim}, 1.0);
    return p;
}

Tensor positional_encoding(std::size_t steps, std::size_t dim) {
    Tensor pe = Tensor::matrix(steps, dim);
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t i = 0; i < dim; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
            const double a = static_cast<double>(t) * rate;
            pe.at(t, i) = (i % 2 == 0) ? std::sin(a) : std::cos(a);
        }
    }
    return pe;
}

Tensor normalize_features(const ModelParams& params, const Tensor& x) {
    require(x.rank() == 2 && x.cols() == params.norm_mean.size() && x.cols() == params.norm_std.size(),
            ErrorKind::kShape,
            "feature dimension " + std::to_string(x.cols()) + " does not match model input " +
                std::to_string(params.norm_mean.size()));
    Tensor out(x.shape);
    const std::size_t c = x.cols();
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        out.data[i] = (x.data[i] - params.norm_mean.data[i % c]) / params.norm_std.data[i % c];
    }
    return out;
}

Extractor::Extractor(Graph& graph, const ModelParams& params, const ExtractorConfig& cfg)
    : g_(graph), params_(params), cfg_(cfg) {
    cfg_.validate();
    const auto layout = parameter_layout(cfg_);
    require(layout.size() == params_.tensors.size(), ErrorKind::kShape, "parameter count does not match config");
    for (std::size_t i = 0; i < layout.size(); ++i) {
        require(params_.names[i] == layout[i].first && params_.tensors[i].shape == layout[i].second,
                ErrorKind::kShape, "parameter '" + params_.names[i] + "' does not match config layout");
        index_[params_.names[i]] = i;
        vars_.push_back(g_.param(params_.tensors[i]));
    }
}

Var Extractor::param(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), ErrorKind::kInvalidArgument, "no parameter named '" + name + "'");
    return vars_[it->second];
}

Var Extractor::maybe_dropout(Var x, bool training, std::mt19937_64* rng) {
    if (!training || cfg_.dropout == 0.0) {
        return x;
    }
    require(rng != nullptr, ErrorKind::kInvalidArgument, "training mode requires a random source");
    return g_.dropout(x, cfg_.dropout, *rng);
}

Var Extractor::attention(std::size_t block, Var x) {
    const std::string p = "block" + std::to_string(block) + ".attn.";
    auto proj = [&](const char* m) {
        return g_.add_row(g_.matmul(x, param(p + m + ".weight")), param(p + m + ".bias"));
    };
    const Var q = proj("q"), k = proj("k"), v = proj("v");
    const std::size_t dh = cfg_.hidden_dim / cfg_.n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> heads;
    for (std::size_t h = 0; h < cfg_.n_heads; ++h) {
        const Var qh = g_.slice_cols(q, h * dh, dh);
        const Var kh = g_.slice_cols(k, h * dh, dh);
        const Var vh = g_.slice_cols(v, h * dh, dh);
        const Var weights = g_.softmax(g_.scale(g_.matmul_bt(qh, kh), inv_sqrt), 1);
        heads.push_back(g_.matmul(weights, vh));
    }
    const Var merged = heads.size() == 1 ? heads[0] : g_.concat_cols(heads);
    return g_.add_row(g_.matmul(merged, param(p + "o.weight")), param(p + "o.bias"));
}

Var Extractor::forward_intensity(Var x, std::size_t emotion_class, bool training, std::mt19937_64* rng) {
    const Tensor& xv = g_.value(x);
    require(xv.rank() == 2 && xv.rows() >= 1 && xv.cols() == cfg_.input_dim, ErrorKind::kShape,
            "extractor input must be [T>=1, " + std::to_string(cfg_.input_dim) + "], got " + xv.shape_str());
    require(emotion_class < cfg_.n_emotion_classes(), ErrorKind::kInvalidArgument,
            "emotion class " + std::to_string(emotion_class) + " out of range");
    Var hcur = g_.add_row(g_.matmul(x, param("input.weight")), param("input.bias"));
    hcur = g_.add(hcur, g_.constant(positional_encoding(xv.rows(), cfg_.hidden_dim)));
    for (std::size_t b = 0; b < cfg_.n_fft_blocks; ++b) {
        const std::string p = "block" + std::to_string(b) + ".";
        const Var attn = maybe_dropout(attention(b, hcur), training, rng);
        hcur = g_.layer_norm(g_.add(hcur, attn), param(p + "ln1.gain"), param(p + "ln1.bias"));
        Var ff = g_.relu(g_.add_row(g_.conv1d(hcur, param(p + "conv1.weight")), param(p + "conv1.bias")));
        ff = g_.add_row(g_.conv1d(ff, param(p + "conv2.weight")), param(p + "conv2.bias"));
        ff = maybe_dropout(ff, training, rng);
        hcur = g_.layer_norm(g_.add(hcur, ff), param(p + "ln2.gain"), param(p + "ln2.bias"));
    }
    const Var emb = g_.embedding_lookup(param("emotion.embedding"), emotion_class);
    return g_.add_row(hcur, emb);
}

Var Extractor::pool(Var intensity) { return g_.mean_over_time(intensity); }

Var Extractor::classify(Var pooled) {
    return g_.add_row(g_.matmul(pooled, param("classifier.weight")), param("classifier.bias"));
}

Var Extractor::project_score(Var pooled) {
    const Var hidden =
        g_.tanh(g_.add_row(g_.matmul(pooled, param("projector.fc1.weight")), param("projector.fc1.bias")));
    return g_.add_row(g_.matmul(hidden, param("projector.fc2.weight")), param("projector.fc2.bias"));
}

ScoredUtterance run_extractor(const ModelParams& params, const ExtractorConfig& cfg, const Tensor& raw_frames,
                              std::size_t emotion_class) {
    Graph g;
    Extractor ex(g, params, cfg);
    const Var x = g.constant(normalize_features(params, raw_frames));
    const Var i = ex.forward_intensity(x, emotion_class);
    const Var h = ex.pool(i);
    ScoredUtterance out;
    out.intensity = g.value(i);
    out.pooled = g.value(h);
    out.logits = g.value(ex.classify(h));
    out.score = g.value(ex.project_score(h)).data[0];
    return out;
}

Tensor forward_intensity(const ModelParams& params, const ExtractorConfig& cfg, const Tensor& raw_frames,
                         std::size_t emotion_class) {
    Graph g;
    Extractor ex(g, params, cfg);
    return g.value(ex.forward_intensity(g.constant(normalize_features(params, raw_frames)), emotion_class));
}

Tensor pool(const Tensor& intensity) {
    Graph g;
    return g.value(g.mean_over_time(g.constant(intensity)));
}

Tensor classify(const ModelParams& params, const ExtractorConfig& cfg, const Tensor& pooled) {
    Graph g;
    Extractor ex(g, params, cfg);
    require(pooled.rank() == 1 && pooled.size() == cfg.hidden_dim, ErrorKind::kShape, "classify: bad pooled shape");
    return g.value(ex.classify(g.constant(pooled)));
}

double project_score(const ModelParams& params, const ExtractorConfig& cfg, const Tensor& pooled) {
    Graph g;
    Extractor ex(g, params, cfg);
    require(pooled.rank() == 1 && pooled.size() == cfg.hidden_dim, ErrorKind::kShape,
            "project_score: bad pooled shape");
    return g.value(ex.project_score(g.constant(pooled))).data[0];
}

namespace {

constexpr std::uint32_t kDtypeF32 = 0;

void write_tensor(ByteWriter& w, const std::string& name, const Tensor& t) {
    w.str(name);
    w.u32(kDtypeF32);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto d : t.shape) {
        w.u32(static_cast<std::uint32_t>(d));
    }
    for (double v : t.data) {
        w.f32(static_cast<float>(v));
    }
}

}  // namespace

std::vector<std::uint8_t> encode_model(const ModelFile& model) {
    model.config.validate();
    ByteWriter w;
    w.magic("EMOM");
    w.u32(kModelFormatVersion);
    const json header{{"extractor", model.config.to_json()}, {"provenance", model.provenance}};
    w.str(header.dump());
    w.u32(static_cast<std::uint32_t>(model.params.tensors.size() + 2));
    for (std::size_t i = 0; i < model.params.tensors.size(); ++i) {
        write_tensor(w, model.params.names[i], model.params.tensors[i]);
    }
    write_tensor(w, "norm.mean", model.params.norm_mean);
    write_tensor(w, "norm.std", model.params.norm_std);
    w.crc();
    return w.bytes();
}

ModelFile decode_model(std::span<const std::uint8_t> bytes, const std::string& what, std::size_t* end_offset) {
    ByteReader r(bytes, what);
    r.expect_magic("EMOM");
    const std::uint32_t version = r.u32();
    require(version == kModelFormatVersion, ErrorKind::kVersion,
            what + ": unsupported model format version " + std::to_string(version));
    ModelFile m;
    json header;
    try {
        header = json::parse(r.str());
    } catch (const json::exception& e) {
        fail(ErrorKind::kFormat, what + ": bad config JSON: " + e.what());
    }
    require(header.contains("extractor"), ErrorKind::kFormat, what + ": config JSON lacks 'extractor'");
    m.config = ExtractorConfig::from_json(header.at("extractor"));
    if (header.contains("provenance")) {
        m.provenance = header.at("provenance");
    }
    const std::uint32_t count = r.u32();
    std::map<std::string, Tensor> table;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        const std::uint32_t dtype = r.u32();
        require(dtype == kDtypeF32, ErrorKind::kFormat, what + ": unsupported dtype for '" + name + "'");
        const std::uint32_t ndim = r.u32();
        require(ndim <= 8, ErrorKind::kFormat, what + ": implausible rank for '" + name + "'");
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) {
            d = r.u32();
        }
        const std::size_t n = shape_product(shape);
        require(r.remaining() >= n * 4, ErrorKind::kFormat, what + ": truncated tensor '" + name + "'");
        Tensor t(shape);
        for (auto& v : t.data) {
            v = r.f32();
        }
        table.emplace(std::move(name), std::move(t));
    }
    r.verify_crc();
    if (end_offset) {
        *end_offset = r.pos();
    }
    for (const auto& [name, shape] : parameter_layout(m.config)) {
        auto it = table.find(name);
        require(it != table.end(), ErrorKind::kShape, what + ": missing tensor '" + name + "'");
        require(it->second.shape == shape, ErrorKind::kShape,
                what + ": tensor '" + name + "' has shape " + it->second.shape_str());
        m.params.names.push_back(name);
        m.params.tensors.push_back(std::move(it->second));
    }
    for (const char* name : {"norm.mean", "norm.std"}) {
        auto it = table.find(name);
        require(it != table.end() && it->second.shape == std::vector<std::size_t>{m.config.input_dim},
                ErrorKind::kShape, what + ": missing or misshapen '" + name + "'");
    }
    m.params.norm_mean = table.at("norm.mean");
    m.params.norm_std = table.at("norm.std");
    require(table.size() == m.params.tensors.size() + 2, ErrorKind::kShape, what + ": unexpected extra tensors");
    return m;
}

void save_model(const ModelFile& model, const std::filesystem::path& path) {
    write_file_bytes(path, encode_model(model));
}

ModelFile load_model(const std::filesystem::path& path) {
    const auto bytes = read_file_bytes(path);
    std::size_t end = 0;
    ModelFile m = decode_model(bytes, path.string(), &end);
    // A checkpoint may carry an optimizer appendix after the model section.
    if (end != bytes.size()) {
        require(bytes.size() - end >= 4 && std::equal(bytes.begin() + static_cast<std::ptrdiff_t>(end),
                                                      bytes.begin() + static_cast<std::ptrdiff_t>(end) + 4,
                                                      std::begin("EMOA")),
                ErrorKind::kFormat, path.string() + ": trailing bytes after model");
    }
    return m;
}

}  // namespace emorank
