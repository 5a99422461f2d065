#include "talon/sam.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace talon::sam {

const char* const STATIC_PROMPT_TEXT =
    "Forecast the next values of the input time series from its recent history.";

namespace {

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

}  // namespace

std::string build_prompt(const PromptSpec& spec) {
    std::string names;
    for (std::size_t i = 0; i < spec.expert_names.size(); ++i) {
        if (i) names += ", ";
        names += spec.expert_names[i];
    }
    std::string out;
    out += "[Expert Routing Hint]\n";
    out += "The available expert types are: " + names + ".\n";
    out += "\n";
    out += "[Patch Time Context]\n";
    out += "This patch consists of " + std::to_string(spec.meta.token_len) +
           " time steps, from " + spec.meta.patch_start + " to " + spec.meta.patch_end + ".\n";
    out += "It is part of a longer input window, which spans from " + spec.meta.x_start +
           " to " + spec.meta.x_end + " and contains " + std::to_string(spec.meta.seq_len) +
           " time steps.\n";
    out += "\n";
    out += "[Complexity Features]\n";
    out += "Trend Strength: " + fixed4(spec.complexity.trend_strength) + ".\n";
    out += "Local Variation: " + fixed4(spec.complexity.local_variation) + ".\n";
    out += "Temporal Dependency: " + fixed4(spec.complexity.autocorr) + ".\n";
    return out;
}

template <typename T>
Tensor<T> PromptEncoder<T>::embed(const PromptSpec& spec, bool static_prompt) {
    prompt_builds_.fetch_add(1);
    std::string text = static_prompt ? std::string(STATIC_PROMPT_TEXT) : build_prompt(spec);
    return embed_text(text);
}

template <typename T>
Tensor<T> PromptEncoder<T>::embed_text(const std::string& prompt) {
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = cache_.find(prompt);
        if (it != cache_.end()) return it->second;
    }
    backbone_encodes_.fetch_add(1);
    Tensor<T> emb =
        backbone::encode_prompt(backbone::tokenize(prompt, cfg_.max_positions), *store_, cfg_);
    std::lock_guard<std::mutex> lock(mutex_);
    auto [it, inserted] = cache_.emplace(prompt, emb);
    if (inserted && !dump_path_.empty()) {
        std::ofstream dump(dump_path_, std::ios::app);
        std::string escaped;
        for (char c : prompt) {
            if (c == '\n') escaped += "\\n";
            else if (c == '\\') escaped += "\\\\";
            else escaped += c;
        }
        dump << escaped << '\n';
    }
    return it->second;
}

template <typename T>
ad::Var<T> align_loss(ad::Var<T> temporal, ad::Var<T> prompts, T tau) {
    using namespace ad;
    if (!(tau > T(0))) throw std::invalid_argument("align_loss: tau must be positive");
    if (temporal.rows() != prompts.rows() || temporal.cols() != prompts.cols())
        throw std::invalid_argument("align_loss: batch shape mismatch");
    const std::size_t N = temporal.rows();
    if (N == 0) throw std::invalid_argument("align_loss: empty batch");
    Var<T> e_hat = normalize_rows(temporal);
    Var<T> p_hat = normalize_rows(prompts);
    Var<T> sims = scale(matmul_nt(e_hat, p_hat), T(1) / tau);  // N x N cosine / tau
    Var<T> logp = log_softmax_rows(sims);
    return scale(mean_all(diag(logp)), T(-1));
}

double align_loss_value(const std::vector<std::vector<double>>& temporal,
                        const std::vector<std::vector<double>>& prompts, double tau) {
    using namespace ad;
    const std::size_t N = temporal.size();
    if (N == 0 || prompts.size() != N)
        throw std::invalid_argument("align_loss: batch shape mismatch");
    Graph<double> g;
    g.set_grad_enabled(false);
    std::vector<Var<double>> erows, prows;
    for (std::size_t i = 0; i < N; ++i) {
        erows.push_back(g.constant(Tensor<double>::row(temporal[i])));
        prows.push_back(g.constant(Tensor<double>::row(prompts[i])));
    }
    return align_loss(concat_rows(erows), concat_rows(prows), tau).value()[0];
}

template <typename T>
double mean_diag_cosine(const Tensor<T>& e, const Tensor<T>& p) {
    if (e.rows() != p.rows() || e.cols() != p.cols())
        throw std::invalid_argument("cosine: shape mismatch");
    double acc = 0.0;
    for (std::size_t r = 0; r < e.rows(); ++r) {
        double dot = 0.0, ne = 0.0, np = 0.0;
        for (std::size_t c = 0; c < e.cols(); ++c) {
            dot += double(e.at(r, c)) * double(p.at(r, c));
            ne += double(e.at(r, c)) * double(e.at(r, c));
            np += double(p.at(r, c)) * double(p.at(r, c));
        }
        acc += dot / std::max(std::sqrt(ne * np), 1e-12);
    }
    return acc / double(e.rows());
}

template class PromptEncoder<float>;
template class PromptEncoder<double>;
template ad::Var<float> align_loss<float>(ad::Var<float>, ad::Var<float>, float);
template ad::Var<double> align_loss<double>(ad::Var<double>, ad::Var<double>, double);
template double mean_diag_cosine<float>(const Tensor<float>&, const Tensor<float>&);
template double mean_diag_cosine<double>(const Tensor<double>&, const Tensor<double>&);

}  // namespace talon::sam
