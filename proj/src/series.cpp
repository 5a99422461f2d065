#include "talon/series.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "talon/numerics.hpp"
#include "talon/rng.hpp"

namespace talon {

namespace {

std::vector<std::string> split_line(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool all_integer(const std::vector<std::string>& ts) {
    for (const auto& t : ts) {
        if (t.empty()) return false;
        std::size_t i = t[0] == '-' ? 1 : 0;
        if (i == t.size()) return false;
        for (; i < t.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(t[i]))) return false;
    }
    return true;
}

void check_monotone(const std::vector<std::string>& ts) {
    if (ts.size() < 2) return;
    if (all_integer(ts)) {
        for (std::size_t i = 1; i < ts.size(); ++i)
            if (std::stoll(ts[i]) <= std::stoll(ts[i - 1]))
                throw std::runtime_error("timestamps not strictly increasing at row " +
                                         std::to_string(i));
    } else {
        for (std::size_t i = 1; i < ts.size(); ++i)
            if (ts[i] <= ts[i - 1])
                throw std::runtime_error("timestamps not strictly increasing at row " +
                                         std::to_string(i));
    }
}

}  // namespace

MultivariateSeries load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open csv: " + path);
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("no rows: " + path);
    std::vector<std::string> cols = split_line(header, ',');
    for (auto& c : cols) c = trim(c);

    std::ptrdiff_t date_idx = -1;
    if (!schema.date_column.empty()) {
        auto it = std::find(cols.begin(), cols.end(), schema.date_column);
        if (it == cols.end())
            throw std::runtime_error("missing column: " + schema.date_column);
        date_idx = it - cols.begin();
    }

    std::vector<std::size_t> value_idx;
    MultivariateSeries s;
    if (schema.value_columns.empty()) {
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (std::ptrdiff_t(i) != date_idx) {
                value_idx.push_back(i);
                s.channel_names.push_back(cols[i]);
            }
    } else {
        for (const auto& name : schema.value_columns) {
            auto it = std::find(cols.begin(), cols.end(), name);
            if (it == cols.end()) throw std::runtime_error("missing column: " + name);
            value_idx.push_back(std::size_t(it - cols.begin()));
            s.channel_names.push_back(name);
        }
    }
    if (value_idx.empty()) throw std::runtime_error("no value columns: " + path);

    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split_line(line, ',');
        if (cells.size() != cols.size())
            throw std::runtime_error("ragged row " + std::to_string(row) + " in " + path);
        s.timestamps.push_back(date_idx >= 0 ? trim(cells[std::size_t(date_idx)])
                                             : std::to_string(row));
        std::vector<double> vals(value_idx.size());
        for (std::size_t j = 0; j < value_idx.size(); ++j) {
            const std::string cell = trim(cells[value_idx[j]]);
            try {
                std::size_t used = 0;
                vals[j] = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw std::runtime_error("unparseable cell '" + cell + "' at row " +
                                         std::to_string(row) + " column " +
                                         s.channel_names[j]);
            }
            if (!std::isfinite(vals[j]))
                throw std::runtime_error("non-finite value at row " + std::to_string(row));
        }
        s.values.push_back(std::move(vals));
        ++row;
    }
    if (s.values.empty()) throw std::runtime_error("no rows: " + path);
    check_monotone(s.timestamps);
    s.dataset_id = path;
    return s;
}

void write_csv(const MultivariateSeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write csv: " + path);
    out << "date";
    for (const auto& n : series.channel_names) out << ',' << n;
    out << '\n';
    out.precision(12);
    for (std::size_t t = 0; t < series.length(); ++t) {
        out << series.timestamps[t];
        for (double v : series.values[t]) out << ',' << v;
        out << '\n';
    }
}

std::array<MultivariateSeries, 3> chronological_split(const MultivariateSeries& series,
                                                      std::size_t n_train, std::size_t n_val,
                                                      std::size_t n_test) {
    if (n_train < 1 || n_val < 1 || n_test < 1)
        throw std::invalid_argument("split: all counts must be >= 1");
    if (n_train + n_val + n_test > series.length())
        throw std::invalid_argument("split: counts exceed series length");
    auto take = [&](std::size_t begin, std::size_t count, const char* tag) {
        MultivariateSeries out;
        out.channel_names = series.channel_names;
        out.dataset_id = series.dataset_id + "/" + tag;
        out.timestamps.assign(series.timestamps.begin() + begin,
                              series.timestamps.begin() + begin + count);
        out.values.assign(series.values.begin() + begin,
                          series.values.begin() + begin + count);
        return out;
    };
    return {take(0, n_train, "train"), take(n_train, n_val, "val"),
            take(n_train + n_val, n_test, "test")};
}

std::vector<Window> make_windows(const MultivariateSeries& series, std::size_t lookback,
                                 std::size_t horizon, std::size_t stride) {
    if (stride < 1) throw std::invalid_argument("make_windows: stride must be >= 1");
    if (lookback + horizon > series.length())
        throw std::invalid_argument("make_windows: lookback+horizon exceeds series length");
    const std::size_t T = series.length(), C = series.channels();
    std::vector<Window> out;
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t start = 0; start + lookback + horizon <= T; start += stride) {
            Window w;
            w.channel = c;
            w.start = start;
            w.lookback.resize(lookback);
            for (std::size_t i = 0; i < lookback; ++i) w.lookback[i] = series.at(start + i, c);
            w.target.resize(horizon);
            for (std::size_t i = 0; i < horizon; ++i)
                w.target[i] = series.at(start + lookback + i, c);
            w.stats = lookback_stats(w.lookback);
            out.push_back(std::move(w));
        }
    }
    return out;
}

std::vector<std::vector<double>> segment(const std::vector<double>& lookback,
                                         std::size_t patch_len) {
    if (patch_len == 0 || lookback.size() % patch_len != 0)
        throw std::invalid_argument("segment: patch length must divide lookback length");
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < lookback.size(); i += patch_len)
        out.emplace_back(lookback.begin() + i, lookback.begin() + i + patch_len);
    return out;
}

std::vector<PatchMeta> patch_metadata(const MultivariateSeries& series, const Window& window,
                                      std::size_t patch_len) {
    const std::size_t L = window.lookback.size();
    if (patch_len == 0 || L % patch_len != 0)
        throw std::invalid_argument("patch_metadata: patch length must divide lookback");
    const std::size_t N = L / patch_len;
    std::vector<PatchMeta> out(N);
    for (std::size_t i = 0; i < N; ++i) {
        PatchMeta& m = out[i];
        m.index = i + 1;
        m.token_len = patch_len;
        m.seq_len = L;
        m.patch_start = series.timestamps[window.start + i * patch_len];
        m.patch_end = series.timestamps[window.start + (i + 1) * patch_len - 1];
        m.x_start = series.timestamps[window.start];
        m.x_end = series.timestamps[window.start + L - 1];
    }
    return out;
}

NormStats lookback_stats(const std::vector<double>& lookback) {
    if (lookback.size() < 2)
        throw std::invalid_argument("standardize: lookback must have >= 2 samples");
    NormStats st;
    st.mean = mean(lookback);
    st.std = std::max(stddev(lookback), 1e-5);
    return st;
}

std::vector<double> standardize(const std::vector<double>& xs, const NormStats& stats) {
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = (xs[i] - stats.mean) / stats.std;
    return out;
}

std::vector<double> destandardize(const std::vector<double>& xs, const NormStats& stats) {
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] * stats.std + stats.mean;
    return out;
}

SynthResult synth_generate(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.length == 0) throw std::invalid_argument("synth: length must be positive");
    if (spec.channels == 0) throw std::invalid_argument("synth: channels must be positive");
    if (spec.regimes.empty()) throw std::invalid_argument("synth: no regimes");
    for (const auto& r : spec.regimes)
        if (r.kind != "linear-trend" && r.kind != "sinusoid" && r.kind != "ar1" &&
            r.kind != "white-noise")
            throw std::invalid_argument("synth: unknown regime kind '" + r.kind + "'");

    // Resolve block lengths: explicit lengths first, equal shares of the rest.
    std::size_t fixed = 0, flexible = 0;
    for (const auto& r : spec.regimes) {
        fixed += r.length;
        if (r.length == 0) ++flexible;
    }
    if (fixed > spec.length) throw std::invalid_argument("synth: regime lengths exceed total");
    std::vector<std::size_t> lens;
    std::size_t rem = spec.length - fixed;
    for (const auto& r : spec.regimes) {
        if (r.length) {
            lens.push_back(r.length);
        } else {
            std::size_t share = rem / flexible;
            lens.push_back(share);
        }
    }
    // Push any rounding remainder into the final block.
    std::size_t total = 0;
    for (std::size_t l : lens) total += l;
    lens.back() += spec.length - total;

    SynthResult res;
    res.series.dataset_id = "synth";
    res.regime_labels.reserve(spec.length);
    res.series.values.assign(spec.length, std::vector<double>(spec.channels, 0.0));
    for (std::size_t t = 0; t < spec.length; ++t)
        res.series.timestamps.push_back(std::to_string(t));
    for (std::size_t c = 0; c < spec.channels; ++c)
        res.series.channel_names.push_back("ch" + std::to_string(c));

    for (std::size_t c = 0; c < spec.channels; ++c) {
        double base = 0.0;
        std::size_t t0 = 0;
        for (std::size_t ri = 0; ri < spec.regimes.size(); ++ri) {
            const RegimeSpec& r = spec.regimes[ri];
            Rng rng(seed, "synth/" + r.name + "/ch" + std::to_string(c));
            double state = 0.0;
            for (std::size_t i = 0; i < lens[ri]; ++i) {
                double v = base;
                if (r.kind == "linear-trend") {
                    v = base + r.slope * double(i + 1) + r.noise * rng.normal();
                } else if (r.kind == "sinusoid") {
                    v = base + r.amplitude * std::sin(2.0 * 3.14159265358979323846 *
                                                      double(i) / r.period) +
                        r.noise * rng.normal();
                } else if (r.kind == "ar1") {
                    state = r.rho * state + r.scale * rng.normal();
                    v = base + state;
                } else {  // white-noise
                    v = base + r.scale * rng.normal();
                }
                res.series.values[t0 + i][c] = v;
                if (c == 0) res.regime_labels.push_back(r.name);
            }
            if (lens[ri]) base = res.series.values[t0 + lens[ri] - 1][c];
            t0 += lens[ri];
        }
    }
    return res;
}

void write_regime_labels(const SynthResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write labels: " + path);
    out << "index,regime\n";
    for (std::size_t t = 0; t < result.regime_labels.size(); ++t)
        out << t << ',' << result.regime_labels[t] << '\n';
}

SynthSpec parse_synth_spec_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("synth spec: line " + std::to_string(lineno) +
                                     " is not key=value");
        kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    SynthSpec spec;
    auto req = [&](const char* key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw std::runtime_error(std::string("synth spec: missing ") + key);
        return it->second;
    };
    spec.length = std::stoull(req("length"));
    if (kv.count("channels")) spec.channels = std::stoull(kv["channels"]);
    std::string names = req("regimes");
    std::string cur;
    std::vector<std::string> regime_names;
    for (char c : names + ",") {
        if (c == ',') {
            if (!trim(cur).empty()) regime_names.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (regime_names.empty()) throw std::runtime_error("synth spec: empty regimes list");
    for (const auto& name : regime_names) {
        RegimeSpec r;
        r.name = name;
        const std::string p = "regime." + name + ".";
        auto get = [&](const char* field) -> const std::string* {
            auto it = kv.find(p + field);
            return it == kv.end() ? nullptr : &it->second;
        };
        if (const auto* v = get("kind")) r.kind = *v;
        else throw std::runtime_error("synth spec: missing " + p + "kind");
        if (const auto* v = get("length")) r.length = std::stoull(*v);
        if (const auto* v = get("slope")) r.slope = std::stod(*v);
        if (const auto* v = get("amplitude")) r.amplitude = std::stod(*v);
        if (const auto* v = get("period")) r.period = std::stod(*v);
        if (const auto* v = get("rho")) r.rho = std::stod(*v);
        if (const auto* v = get("scale")) r.scale = std::stod(*v);
        if (const auto* v = get("noise")) r.noise = std::stod(*v);
        spec.regimes.push_back(std::move(r));
    }
    return spec;
}

SynthSpec parse_synth_spec_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("synth spec: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_synth_spec_text(ss.str());
}

std::vector<std::string> load_regime_labels(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open labels: " + path);
    std::string line;
    std::getline(in, line);  // header
    std::vector<std::string> labels;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto cells = split_line(line, ',');
        if (cells.size() != 2) throw std::runtime_error("bad labels row: " + line);
        labels.push_back(trim(cells[1]));
    }
    return labels;
}

}  // namespace talon
