#include "sgds/config.hpp"

#include "sgds/binary_io.hpp"
#include "sgds/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace sgds {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(trim(cur));
    return out;
}

std::uint64_t as_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (v.empty() || ec != std::errc() || ptr != v.data() + v.size())
        throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
    return out;
}

std::size_t as_count(const std::string& key, const std::string& v, std::size_t min = 0) {
    const auto n = static_cast<std::size_t>(as_u64(key, v));
    if (n < min) throw ConfigError(key, "must be at least " + std::to_string(min));
    return n;
}

double as_real(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(d))
        throw ConfigError(key, "expected a real number, got '" + v + "'");
    return d;
}

double as_positive(const std::string& key, const std::string& v) {
    const double d = as_real(key, v);
    if (!(d > 0.0)) throw ConfigError(key, "must be positive");
    return d;
}

bool as_bool(const std::string& key, const std::string& v) {
    std::string s = v;
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "true" || s == "on" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "off" || s == "0" || s == "no") return false;
    throw ConfigError(key, "expected a boolean, got '" + v + "'");
}

// "last" / "all" -> empty list (resolved against the model depth later).
std::vector<std::size_t> as_layers(const std::string& key, const std::string& v, std::string_view symbolic) {
    if (v == symbolic) return {};
    std::vector<std::size_t> out;
    for (const std::string& part : split(v, ',')) {
        const std::size_t l = as_count(key, part);
        if (l >= 64) throw ConfigError(key, "layer index must be below 64");
        if (std::find(out.begin(), out.end(), l) != out.end()) throw ConfigError(key, "duplicate layer index");
        out.push_back(l);
    }
    return out;
}

struct KeySpec {
    std::string key;
    std::string default_value;
    std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)> apply;
};

const std::vector<KeySpec>& key_specs() {
    static const std::vector<KeySpec> specs = {
        {"dataset.kind", "synthetic",
         [](ExperimentConfig& c, const std::string& k, const std::string& v) {
             if (v == "synthetic") c.dataset = DatasetKind::Synthetic;
             else if (v == "embeddings") c.dataset = DatasetKind::Embeddings;
             else throw ConfigError(k, "expected 'synthetic' or 'embeddings'");
         }},
        {"dataset.groups", "4", [](auto& c, auto& k, auto& v) { c.synthetic.groups = as_count(k, v, 1); }},
        {"dataset.classes_per_group", "5",
         [](auto& c, auto& k, auto& v) { c.synthetic.classes_per_group = as_count(k, v, 1); }},
        {"dataset.dim", "64", [](auto& c, auto& k, auto& v) { c.synthetic.dim = as_count(k, v, 2); }},
        {"dataset.angle", "0.25", [](auto& c, auto& k, auto& v) { c.synthetic.within_group_angle = as_real(k, v); }},
        {"dataset.noise", "0.15", [](auto& c, auto& k, auto& v) { c.synthetic.noise_sigma = as_positive(k, v); }},
        {"dataset.train_per_class", "100",
         [](auto& c, auto& k, auto& v) { c.synthetic.train_per_class = as_count(k, v, 1); }},
        {"dataset.test_per_class", "50",
         [](auto& c, auto& k, auto& v) { c.synthetic.test_per_class = as_count(k, v, 1); }},
        {"dataset.seed", "7", [](auto& c, auto& k, auto& v) { c.synthetic.seed = as_u64(k, v); }},
        {"dataset.train_path", "", [](auto& c, auto&, auto& v) { c.train_path = v; }},
        {"dataset.test_path", "", [](auto& c, auto&, auto& v) { c.test_path = v; }},
        {"tasks.count", "10", [](auto& c, auto& k, auto& v) { c.num_tasks = as_count(k, v, 1); }},
        {"tasks.seed", "1993", [](auto& c, auto& k, auto& v) { c.order_seed = as_u64(k, v); }},
        {"model.layers", "4",
         [](auto& c, auto& k, auto& v) {
             c.model.num_blocks = as_count(k, v, 1);
             if (c.model.num_blocks > 64) throw ConfigError(k, "at most 64 blocks");
         }},
        {"model.dim", "0", [](auto& c, auto& k, auto& v) { c.model_dim = as_count(k, v); }},
        {"model.seed", "42", [](auto& c, auto& k, auto& v) { c.model.backbone_seed = as_u64(k, v); }},
        {"adapter.rank", "16", [](auto& c, auto& k, auto& v) { c.model.rank = as_count(k, v, 1); }},
        {"adapter.layers", "all", [](auto& c, auto& k, auto& v) { c.model.adapter_layers = as_layers(k, v, "all"); }},
        {"sgds.enabled", "true", [](auto& c, auto& k, auto& v) { c.train.sgds_enabled = as_bool(k, v); }},
        {"sgds.k", "0.6",
         [](auto& c, auto& k, auto& v) {
             c.train.sparsifier.k = as_real(k, v);
             if (!(c.train.sparsifier.k > 0.0 && c.train.sparsifier.k <= 1.0)) throw ConfigError(k, "must lie in (0, 1]");
         }},
        {"sgds.beta", "0.5", [](auto& c, auto& k, auto& v) { c.train.sparsifier.beta = as_positive(k, v); }},
        {"sgds.gamma", "1.0", [](auto& c, auto& k, auto& v) { c.train.sparsifier.gamma = as_positive(k, v); }},
        {"sgds.target_layers", "last",
         [](auto& c, auto& k, auto& v) { c.train.sparsifier.target_layers = as_layers(k, v, "last"); }},
        {"sgds.se", "true", [](auto& c, auto& k, auto& v) { c.train.se_enabled = as_bool(k, v); }},
        {"sgds.ac", "true", [](auto& c, auto& k, auto& v) { c.train.ac_enabled = as_bool(k, v); }},
        {"train.epochs", "20", [](auto& c, auto& k, auto& v) { c.train.epochs = as_count(k, v, 1); }},
        {"train.batch", "48", [](auto& c, auto& k, auto& v) { c.train.batch = as_count(k, v, 1); }},
        {"train.lr", "0.01", [](auto& c, auto& k, auto& v) { c.train.lr = as_positive(k, v); }},
        {"train.momentum", "0.9",
         [](auto& c, auto& k, auto& v) {
             c.train.momentum = as_real(k, v);
             if (!(c.train.momentum >= 0.0 && c.train.momentum < 1.0)) throw ConfigError(k, "must lie in [0, 1)");
         }},
        {"train.weight_decay", "0",
         [](auto& c, auto& k, auto& v) {
             c.train.weight_decay = as_real(k, v);
             if (c.train.weight_decay < 0.0) throw ConfigError(k, "must be non-negative");
         }},
        {"train.align_samples", "256", [](auto& c, auto& k, auto& v) { c.train.align_samples = as_count(k, v); }},
        {"baseline.param_reg.mode", "off",
         [](auto& c, auto& k, auto& v) {
             if (v == "off") c.train.param_reg = ParamReg::Off;
             else if (v == "up") c.train.param_reg = ParamReg::Up;
             else if (v == "down") c.train.param_reg = ParamReg::Down;
             else if (v == "both") c.train.param_reg = ParamReg::Both;
             else throw ConfigError(k, "expected off, up, down or both");
         }},
        {"baseline.param_reg.lambda", "0.1",
         [](auto& c, auto& k, auto& v) {
             c.train.reg_lambda = as_real(k, v);
             if (c.train.reg_lambda < 0.0) throw ConfigError(k, "must be non-negative");
         }},
        {"run.seeds", "",
         [](auto& c, auto& k, auto& v) {
             c.seeds.clear();
             if (v.empty()) return;
             for (const std::string& s : split(v, ',')) c.seeds.push_back(as_u64(k, s));
         }},
        {"run.threads", "0", [](auto& c, auto& k, auto& v) { c.threads = as_count(k, v); }},
        {"out.dir", "out",
         [](auto& c, auto& k, auto& v) {
             if (v.empty()) throw ConfigError(k, "must not be empty");
             c.out_dir = v;
         }},
        {"out.svg", "false", [](auto& c, auto& k, auto& v) { c.write_svg = as_bool(k, v); }},
        {"out.checkpoint", "true", [](auto& c, auto& k, auto& v) { c.write_checkpoint = as_bool(k, v); }},
        {"ablation.param_reg", "false", [](auto& c, auto& k, auto& v) { c.ablate_param_reg = as_bool(k, v); }},
        {"ablation.layer_sets", "",
         [](auto& c, auto& k, auto& v) {
             c.ablate_layer_sets.clear();
             if (v.empty()) return;
             for (const std::string& set : split(v, ';')) {
                 auto layers = as_layers(k, set, "last");
                 if (layers.empty()) throw ConfigError(k, "layer sets must list explicit indices");
                 c.ablate_layer_sets.push_back(std::move(layers));
             }
         }},
    };
    return specs;
}

}  // namespace

std::optional<std::string> process_env(const std::string& name) {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const KeySpec& s : key_specs()) out.push_back(s.key);
        return out;
    }();
    return keys;
}

std::string env_name_for(std::string_view key) {
    std::string out = "SGDS_CFG_";
    for (char ch : key) out.push_back(ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    return out;
}

ExperimentConfig parse_config(std::string_view text, const EnvLookup& env) {
    std::map<std::string, std::string> values;
    for (const KeySpec& s : key_specs()) values[s.key] = s.default_value;

    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const std::string body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no), "expected key = value");
        const std::string key = trim(std::string_view(body).substr(0, eq));
        if (!values.count(key)) throw ConfigError(key, "unknown key");
        values[key] = trim(std::string_view(body).substr(eq + 1));
    }
    if (env) {
        for (const KeySpec& s : key_specs())
            if (auto v = env(env_name_for(s.key))) values[s.key] = trim(*v);
    }

    ExperimentConfig cfg;
    for (const KeySpec& s : key_specs()) s.apply(cfg, s.key, values[s.key]);
    cfg.entries = values;

    if (cfg.dataset == DatasetKind::Embeddings && (cfg.train_path.empty() || cfg.test_path.empty()))
        throw ConfigError("dataset.train_path", "embedding datasets need dataset.train_path and dataset.test_path");
    if (cfg.train.sgds_enabled && cfg.train.se_enabled && cfg.train.ac_enabled && cfg.train.epochs < 2)
        throw ConfigError("train.epochs", "both SGDS phases need at least 2 epochs");
    for (std::size_t l : cfg.train.sparsifier.target_layers)
        if (l >= cfg.model.num_blocks) throw ConfigError("sgds.target_layers", "layer index exceeds model.layers");
    for (std::size_t l : cfg.model.adapter_layers)
        if (l >= cfg.model.num_blocks) throw ConfigError("adapter.layers", "layer index exceeds model.layers");
    for (const auto& set : cfg.ablate_layer_sets)
        for (std::size_t l : set)
            if (l >= cfg.model.num_blocks) throw ConfigError("ablation.layer_sets", "layer index exceeds model.layers");
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const EnvLookup& env) {
    std::string text;
    try {
        text = io::read_text(path);
    } catch (const FormatError&) {
        throw ConfigError("<file>", "cannot read " + path.string());
    }
    return parse_config(text, env);
}

}  // namespace sgds
