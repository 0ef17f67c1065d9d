#pragma once

#include <Eigen/Core>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "melodia/common.hpp"

namespace melodia {

enum class AttentionKind { self_attn, cross_attn };

const char* attention_kind_name(AttentionKind kind);

// Projection weights for one layer of one kind. Rows of Q/K/V are tokens;
// W_* maps source features to attention space, heads are contiguous column
// blocks of width head_dim.
struct AttentionParams {
    Eigen::MatrixXf w_q;  // d_attn x d_query_source
    Eigen::MatrixXf w_k;  // d_attn x d_kv_source
    Eigen::MatrixXf w_v;  // d_attn x d_kv_source
    int heads = 4;

    int attn_dim() const { return static_cast<int>(w_q.rows()); }
    int head_dim() const { return attn_dim() / heads; }
    void validate() const;
};

// Row-stochastic attention weights, one matrix per head.
struct AttentionMap {
    std::vector<Eigen::MatrixXf> head_maps;  // each n x m
    int layer = 0;                           // 1-based
    AttentionKind kind = AttentionKind::self_attn;
    int timestep = 0;
};

bool is_row_stochastic(const AttentionMap& map, float tol = 1e-5f);

// Stored source-trajectory Q/K for one layer at one step; heads are column
// blocks, exactly as produced by self_attention.
struct SaOverride {
    Eigen::MatrixXf q;  // N x d_attn
    Eigen::MatrixXf k;  // N x d_attn
    int heads = 4;
    int source_step = 0;
    int source_layer = 0;
};

// Everything one attention evaluation produced. `q`/`k`/`v` and the per-head
// maps double as the cache for the backward pass.
struct AttentionTrace {
    Eigen::MatrixXf q;  // N x d_attn (projected from the live phi even when overridden)
    Eigen::MatrixXf k;
    Eigen::MatrixXf v;
    AttentionMap map;
    Eigen::MatrixXf output;  // N x d_attn, heads concatenated
    bool overridden = false;
};

struct AttentionEvent {
    int layer = 0;  // 1-based
    AttentionKind kind = AttentionKind::self_attn;
    int timestep = 0;
    const AttentionMap* map = nullptr;
    const Eigen::MatrixXf* q = nullptr;  // SA only: live projected Q/K, heads as column blocks
    const Eigen::MatrixXf* k = nullptr;
    int heads = 0;
};

// Capture sinks and self-attention override suppliers, keyed by 1-based layer
// index. Capture never alters numerics; overrides replace only the map.
class HookSet {
public:
    using CaptureSink = std::function<void(const AttentionEvent&)>;
    using OverrideSupplier = std::function<SaOverride(int layer, int timestep)>;

    void add_capture(int layer, AttentionKind kind, CaptureSink sink);
    void add_capture_all_layers(AttentionKind kind, CaptureSink sink);
    void set_override(int layer, OverrideSupplier supplier);  // at most one per layer
    void set_override_all_layers(OverrideSupplier supplier);

    bool has_override(int layer) const;
    std::optional<SaOverride> query_override(int layer, int timestep) const;
    void emit(const AttentionEvent& event) const;
    bool empty() const { return sinks_.empty() && all_layer_sinks_.empty() && overrides_.empty() && !all_override_; }

private:
    std::map<std::pair<int, int>, std::vector<CaptureSink>> sinks_;  // (layer, kind)
    std::map<int, std::vector<CaptureSink>> all_layer_sinks_;        // kind -> sinks
    std::map<int, OverrideSupplier> overrides_;
    OverrideSupplier all_override_;
};

// Softmax(q k^T / sqrt(scale_dim)) with row-max subtraction.
Eigen::MatrixXf scaled_softmax_map(const Eigen::MatrixXf& q, const Eigen::MatrixXf& k,
                                   int scale_dim);

AttentionTrace cross_attention(const Eigen::MatrixXf& phi, const Eigen::MatrixXf& tau,
                               const AttentionParams& params, const HookSet* hooks = nullptr,
                               int layer = 0, int timestep = 0);

// Without an override, Q/K/V all project from phi. With one, the map is
// recomputed from the stored Q/K while V still projects from the live phi.
AttentionTrace self_attention(const Eigen::MatrixXf& phi, const AttentionParams& params,
                              const SaOverride* override_qk = nullptr,
                              const HookSet* hooks = nullptr, int layer = 0, int timestep = 0);

}  // namespace melodia
