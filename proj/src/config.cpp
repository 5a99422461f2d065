#include "talon/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace talon {

#ifndef TALON_BUILD_ID
#define TALON_BUILD_ID "unknown"
#endif

const char* build_id() { return TALON_BUILD_ID; }

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw UsageError("config: boolean expected for " + key + ", got '" + v + "'");
}

std::size_t parse_size(const std::string& v, const std::string& key) {
    try {
        long long n = std::stoll(v);
        if (n < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw UsageError("config: non-negative integer expected for " + key + ", got '" + v + "'");
    }
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw UsageError("config: number expected for " + key + ", got '" + v + "'");
    }
}

std::vector<std::string> parse_list(const std::string& v) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : v) {
        if (c == ',') {
            if (!trim(cur).empty()) out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

const std::unordered_map<std::string, Setter>& setters() {
    static const std::unordered_map<std::string, Setter> table = {
        {"data.csv", [](RunConfig& c, const std::string&, const std::string& v) { c.data_csv = v; }},
        {"data.synth", [](RunConfig& c, const std::string&, const std::string& v) { c.data_synth = v; }},
        {"data.date_column", [](RunConfig& c, const std::string&, const std::string& v) { c.date_column = v; }},
        {"data.value_columns", [](RunConfig& c, const std::string&, const std::string& v) { c.value_columns = parse_list(v); }},
        {"split.n_train", [](RunConfig& c, const std::string& k, const std::string& v) { c.n_train = parse_size(v, k); }},
        {"split.n_val", [](RunConfig& c, const std::string& k, const std::string& v) { c.n_val = parse_size(v, k); }},
        {"split.n_test", [](RunConfig& c, const std::string& k, const std::string& v) { c.n_test = parse_size(v, k); }},
        {"split.train", [](RunConfig& c, const std::string& k, const std::string& v) { c.frac_train = parse_double(v, k); }},
        {"split.val", [](RunConfig& c, const std::string& k, const std::string& v) { c.frac_val = parse_double(v, k); }},
        {"split.test", [](RunConfig& c, const std::string& k, const std::string& v) { c.frac_test = parse_double(v, k); }},
        {"window.lookback", [](RunConfig& c, const std::string& k, const std::string& v) { c.lookback = parse_size(v, k); }},
        {"window.horizon", [](RunConfig& c, const std::string& k, const std::string& v) { c.horizon = parse_size(v, k); }},
        {"window.patch", [](RunConfig& c, const std::string& k, const std::string& v) { c.patch_len = parse_size(v, k); }},
        {"window.stride", [](RunConfig& c, const std::string& k, const std::string& v) { c.stride = parse_size(v, k); }},
        {"complexity.period", [](RunConfig& c, const std::string& k, const std::string& v) { c.period = parse_size(v, k); }},
        {"model.d", [](RunConfig& c, const std::string& k, const std::string& v) { c.d_model = parse_size(v, k); }},
        {"backbone.layers", [](RunConfig& c, const std::string& k, const std::string& v) { c.backbone_layers = parse_size(v, k); }},
        {"backbone.heads", [](RunConfig& c, const std::string& k, const std::string& v) { c.backbone_heads = parse_size(v, k); }},
        {"backbone.max_positions", [](RunConfig& c, const std::string& k, const std::string& v) { c.max_positions = parse_size(v, k); }},
        {"hte.k", [](RunConfig& c, const std::string& k, const std::string& v) { c.top_k = parse_size(v, k); }},
        {"hte.experts", [](RunConfig& c, const std::string&, const std::string& v) { c.experts = parse_list(v); }},
        {"loss.alpha", [](RunConfig& c, const std::string& k, const std::string& v) { c.alpha = parse_double(v, k); }},
        {"loss.beta", [](RunConfig& c, const std::string& k, const std::string& v) { c.beta = parse_double(v, k); }},
        {"sam.tau", [](RunConfig& c, const std::string& k, const std::string& v) { c.tau = parse_double(v, k); }},
        {"sam.dump_prompts", [](RunConfig& c, const std::string&, const std::string& v) { c.dump_prompts = v; }},
        {"optim.lr", [](RunConfig& c, const std::string& k, const std::string& v) { c.lr = parse_double(v, k); }},
        {"optim.epochs", [](RunConfig& c, const std::string& k, const std::string& v) { c.epochs = parse_size(v, k); }},
        {"optim.batch", [](RunConfig& c, const std::string& k, const std::string& v) { c.batch = parse_size(v, k); }},
        {"optim.max_steps", [](RunConfig& c, const std::string& k, const std::string& v) { c.max_steps = parse_size(v, k); }},
        {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_size(v, k); }},
        {"threads", [](RunConfig& c, const std::string& k, const std::string& v) { c.threads = static_cast<int>(parse_size(v, k)); }},
        {"eval.deterministic", [](RunConfig& c, const std::string& k, const std::string& v) { c.eval_deterministic = parse_bool(v, k); }},
        {"eval.stride", [](RunConfig& c, const std::string& k, const std::string& v) { c.eval_stride = parse_size(v, k); }},
        {"out", [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }},
        {"ablation.disable_hte", [](RunConfig& c, const std::string& k, const std::string& v) { c.disable_hte = parse_bool(v, k); }},
        {"ablation.disable_routing", [](RunConfig& c, const std::string& k, const std::string& v) { c.disable_routing = parse_bool(v, k); }},
        {"ablation.disable_sam", [](RunConfig& c, const std::string& k, const std::string& v) { c.disable_sam = parse_bool(v, k); }},
        {"ablation.static_prompt", [](RunConfig& c, const std::string& k, const std::string& v) { c.static_prompt = parse_bool(v, k); }},
        {"ablation.disable_llm", [](RunConfig& c, const std::string& k, const std::string& v) { c.disable_llm = parse_bool(v, k); }},
    };
    return table;
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& key, const std::string& value) {
    auto it = setters().find(key);
    if (it == setters().end()) throw UsageError("config: unknown key '" + key + "'");
    it->second(cfg, key, value);
    cfg.raw[key] = value;
}

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw UsageError("config: line " + std::to_string(lineno) + " is not key=value");
        apply_override(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    for (const auto& e : cfg.experts)
        if (e != "linear" && e != "cnn" && e != "lstm")
            throw UsageError("config: unknown expert '" + e + "'");
    if (cfg.experts.empty()) throw UsageError("config: hte.experts must not be empty");
    return cfg;
}

RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::vector<std::uint8_t> RunConfig::expert_mask() const {
    std::vector<std::uint8_t> mask = {0, 0, 0};
    for (const auto& e : experts) {
        if (e == "linear") mask[0] = 1;
        else if (e == "cnn") mask[1] = 1;
        else if (e == "lstm") mask[2] = 1;
    }
    return mask;
}

std::string RunConfig::canonical_text() const {
    std::ostringstream o;
    auto b = [](bool v) { return v ? "true" : "false"; };
    if (!data_csv.empty()) o << "data.csv=" << data_csv << '\n';
    if (!data_synth.empty()) o << "data.synth=" << data_synth << '\n';
    o << "data.date_column=" << date_column << '\n';
    if (!value_columns.empty()) {
        o << "data.value_columns=";
        for (std::size_t i = 0; i < value_columns.size(); ++i)
            o << (i ? "," : "") << value_columns[i];
        o << '\n';
    }
    if (n_train || n_val || n_test) {
        o << "split.n_train=" << n_train << '\n'
          << "split.n_val=" << n_val << '\n'
          << "split.n_test=" << n_test << '\n';
    } else {
        o << "split.train=" << frac_train << '\n'
          << "split.val=" << frac_val << '\n'
          << "split.test=" << frac_test << '\n';
    }
    o << "window.lookback=" << lookback << '\n'
      << "window.horizon=" << horizon << '\n'
      << "window.patch=" << patch_len << '\n'
      << "window.stride=" << stride << '\n'
      << "complexity.period=" << period << '\n'
      << "model.d=" << d_model << '\n'
      << "backbone.layers=" << backbone_layers << '\n'
      << "backbone.heads=" << backbone_heads << '\n'
      << "backbone.max_positions=" << max_positions << '\n'
      << "hte.k=" << top_k << '\n';
    o << "hte.experts=";
    for (std::size_t i = 0; i < experts.size(); ++i) o << (i ? "," : "") << experts[i];
    o << '\n';
    o << "loss.alpha=" << alpha << '\n'
      << "loss.beta=" << beta << '\n'
      << "sam.tau=" << tau << '\n';
    if (!dump_prompts.empty()) o << "sam.dump_prompts=" << dump_prompts << '\n';
    o << "optim.lr=" << lr << '\n'
      << "optim.epochs=" << epochs << '\n'
      << "optim.batch=" << batch << '\n'
      << "optim.max_steps=" << max_steps << '\n'
      << "seed=" << seed << '\n'
      << "threads=" << threads << '\n'
      << "eval.deterministic=" << b(eval_deterministic) << '\n'
      << "eval.stride=" << eval_stride << '\n'
      << "out=" << out_dir << '\n'
      << "ablation.disable_hte=" << b(disable_hte) << '\n'
      << "ablation.disable_routing=" << b(disable_routing) << '\n'
      << "ablation.disable_sam=" << b(disable_sam) << '\n'
      << "ablation.static_prompt=" << b(static_prompt) << '\n'
      << "ablation.disable_llm=" << b(disable_llm) << '\n';
    return o.str();
}

std::vector<std::string> known_switches() {
    return {"baseline", "w/o-hte", "w/o-hte-r", "w/o-routing", "w/o-sam",
            "w/o-prompt", "w/o-llm", "w/o-linear", "w/o-cnn", "w/o-lstm",
            "k=1", "k=2", "k=3"};
}

void apply_switch(RunConfig& cfg, const std::string& s) {
    auto drop_expert = [&cfg](const std::string& name) {
        cfg.experts.erase(std::remove(cfg.experts.begin(), cfg.experts.end(), name),
                          cfg.experts.end());
        if (cfg.experts.empty()) throw UsageError("switch removes every expert");
        cfg.top_k = std::min(cfg.top_k, cfg.experts.size());
    };
    if (s == "baseline") return;
    if (s == "w/o-hte") cfg.disable_hte = true;
    else if (s == "w/o-hte-r" || s == "w/o-routing") cfg.disable_routing = true;
    else if (s == "w/o-sam") cfg.disable_sam = true;
    else if (s == "w/o-prompt") cfg.static_prompt = true;
    else if (s == "w/o-llm") cfg.disable_llm = true;
    else if (s == "w/o-linear") drop_expert("linear");
    else if (s == "w/o-cnn") drop_expert("cnn");
    else if (s == "w/o-lstm") drop_expert("lstm");
    else if (s == "k=1") cfg.top_k = 1;
    else if (s == "k=2") cfg.top_k = 2;
    else if (s == "k=3") cfg.top_k = 3;
    else throw UsageError("unknown ablation switch '" + s + "'");
}

}  // namespace talon
