#include "melodia/attention.hpp"

#include <cmath>

namespace melodia {

const char* attention_kind_name(AttentionKind kind) {
    return kind == AttentionKind::self_attn ? "sa" : "ca";
}

void AttentionParams::validate() const {
    require(heads >= 1, ErrorCode::invalid_argument, "attention needs at least one head");
    require(w_q.rows() == w_k.rows() && w_q.rows() == w_v.rows(), ErrorCode::invalid_argument,
            "W_Q/W_K/W_V must share their output dimension");
    require(w_k.cols() == w_v.cols(), ErrorCode::invalid_argument,
            "W_K and W_V must share their input dimension");
    require(attn_dim() % heads == 0, ErrorCode::invalid_argument,
            "attention dim must be divisible by head count");
}

bool is_row_stochastic(const AttentionMap& map, float tol) {
    for (const auto& m : map.head_maps) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            if (std::abs(m.row(r).sum() - 1.0f) > tol) return false;
            if ((m.row(r).array() < -tol).any() || (m.row(r).array() > 1.0f + tol).any())
                return false;
        }
    }
    return true;
}

void HookSet::add_capture(int layer, AttentionKind kind, CaptureSink sink) {
    sinks_[{layer, static_cast<int>(kind)}].push_back(std::move(sink));
}

void HookSet::add_capture_all_layers(AttentionKind kind, CaptureSink sink) {
    all_layer_sinks_[static_cast<int>(kind)].push_back(std::move(sink));
}

void HookSet::set_override(int layer, OverrideSupplier supplier) {
    require(!overrides_.count(layer) && !all_override_, ErrorCode::invalid_argument,
            "layer " + std::to_string(layer) + " already has an override supplier");
    overrides_[layer] = std::move(supplier);
}

void HookSet::set_override_all_layers(OverrideSupplier supplier) {
    require(overrides_.empty() && !all_override_, ErrorCode::invalid_argument,
            "override suppliers already registered");
    all_override_ = std::move(supplier);
}

bool HookSet::has_override(int layer) const {
    return all_override_ != nullptr || overrides_.count(layer) > 0;
}

std::optional<SaOverride> HookSet::query_override(int layer, int timestep) const {
    if (all_override_) return all_override_(layer, timestep);
    const auto it = overrides_.find(layer);
    if (it == overrides_.end()) return std::nullopt;
    return it->second(layer, timestep);
}

void HookSet::emit(const AttentionEvent& event) const {
    const auto it = sinks_.find({event.layer, static_cast<int>(event.kind)});
    if (it != sinks_.end()) {
        for (const auto& sink : it->second) sink(event);
    }
    const auto ita = all_layer_sinks_.find(static_cast<int>(event.kind));
    if (ita != all_layer_sinks_.end()) {
        for (const auto& sink : ita->second) sink(event);
    }
}

Eigen::MatrixXf scaled_softmax_map(const Eigen::MatrixXf& q, const Eigen::MatrixXf& k,
                                   int scale_dim) {
    require(q.cols() == k.cols(), ErrorCode::mismatch, "softmax map: inner dims differ");
    require(scale_dim > 0, ErrorCode::invalid_argument, "scale_dim must be positive");
    require(q.allFinite() && k.allFinite(), ErrorCode::numeric_error,
            "softmax map: non-finite inputs");

    const float scale = 1.0f / std::sqrt(static_cast<float>(scale_dim));
    Eigen::MatrixXf logits = (q * k.transpose()) * scale;
    const Eigen::VectorXf row_max = logits.rowwise().maxCoeff();
    logits = (logits.colwise() - row_max).array().exp();
    const Eigen::VectorXf row_sum = logits.rowwise().sum();
    logits.array().colwise() /= row_sum.array();
    return logits;
}

namespace {

AttentionTrace attend(const Eigen::MatrixXf& q, const Eigen::MatrixXf& k,
                      const Eigen::MatrixXf& v, const AttentionParams& params,
                      const Eigen::MatrixXf* map_q, const Eigen::MatrixXf* map_k,
                      AttentionKind kind, int layer, int timestep) {
    const int hd = params.head_dim();
    AttentionTrace trace;
    trace.q = q;
    trace.k = k;
    trace.v = v;
    trace.map.layer = layer;
    trace.map.kind = kind;
    trace.map.timestep = timestep;
    trace.output.resize(q.rows(), params.attn_dim());
    for (int h = 0; h < params.heads; ++h) {
        const auto qh = map_q->middleCols(h * hd, hd);
        const auto kh = map_k->middleCols(h * hd, hd);
        Eigen::MatrixXf m = scaled_softmax_map(qh, kh, hd);
        trace.output.middleCols(h * hd, hd).noalias() = m * v.middleCols(h * hd, hd);
        trace.map.head_maps.push_back(std::move(m));
    }
    return trace;
}

}  // namespace

AttentionTrace cross_attention(const Eigen::MatrixXf& phi, const Eigen::MatrixXf& tau,
                               const AttentionParams& params, const HookSet* hooks, int layer,
                               int timestep) {
    params.validate();
    require(phi.cols() == params.w_q.cols(), ErrorCode::mismatch,
            "cross_attention: phi dim does not match W_Q");
    require(tau.cols() == params.w_k.cols(), ErrorCode::mismatch,
            "cross_attention: tau dim does not match W_K");

    const Eigen::MatrixXf q = phi * params.w_q.transpose();
    const Eigen::MatrixXf k = tau * params.w_k.transpose();
    const Eigen::MatrixXf v = tau * params.w_v.transpose();
    AttentionTrace trace =
        attend(q, k, v, params, &q, &k, AttentionKind::cross_attn, layer, timestep);
    if (hooks != nullptr) {
        AttentionEvent event;
        event.layer = layer;
        event.kind = AttentionKind::cross_attn;
        event.timestep = timestep;
        event.map = &trace.map;
        event.heads = params.heads;
        hooks->emit(event);
    }
    return trace;
}

AttentionTrace self_attention(const Eigen::MatrixXf& phi, const AttentionParams& params,
                              const SaOverride* override_qk, const HookSet* hooks, int layer,
                              int timestep) {
    params.validate();
    require(phi.cols() == params.w_q.cols(), ErrorCode::mismatch,
            "self_attention: phi dim does not match W_Q");

    const Eigen::MatrixXf q = phi * params.w_q.transpose();
    const Eigen::MatrixXf k = phi * params.w_k.transpose();
    const Eigen::MatrixXf v = phi * params.w_v.transpose();

    const Eigen::MatrixXf* map_q = &q;
    const Eigen::MatrixXf* map_k = &k;
    if (override_qk != nullptr) {
        require(override_qk->heads == params.heads, ErrorCode::mismatch,
                "self_attention: override head count differs from layer");
        require(override_qk->q.rows() == q.rows() && override_qk->q.cols() == q.cols() &&
                    override_qk->k.rows() == k.rows() && override_qk->k.cols() == k.cols(),
                ErrorCode::mismatch, "self_attention: override geometry differs from layer");
        map_q = &override_qk->q;
        map_k = &override_qk->k;
    }

    AttentionTrace trace =
        attend(q, k, v, params, map_q, map_k, AttentionKind::self_attn, layer, timestep);
    trace.overridden = override_qk != nullptr;
    if (hooks != nullptr) {
        AttentionEvent event;
        event.layer = layer;
        event.kind = AttentionKind::self_attn;
        event.timestep = timestep;
        event.map = &trace.map;
        event.q = &q;
        event.k = &k;
        event.heads = params.heads;
        hooks->emit(event);
    }
    return trace;
}

}  // namespace melodia
