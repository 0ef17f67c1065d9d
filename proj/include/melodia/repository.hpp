#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "melodia/attention.hpp"

namespace melodia {

struct RepoKey {
    int step_t = 0;
    int layer = 0;  // 1-based
    int head = 0;   // 0-based

    bool operator<(const RepoKey& o) const {
        if (step_t != o.step_t) return step_t < o.step_t;
        if (layer != o.layer) return layer < o.layer;
        return head < o.head;
    }
    bool operator==(const RepoKey& o) const {
        return step_t == o.step_t && layer == o.layer && head == o.head;
    }
    std::string describe() const;
};

struct RepoGeometry {
    int tokens = 0;     // N
    int head_dim = 0;
    int layers = 0;     // L
    int heads = 0;      // H
};

// Persistent store of the source trajectory's per-step, per-layer, per-head
// self-attention queries and keys. Single writer during capture; immutable
// and freely shared once sealed.
class AttentionRepository {
public:
    AttentionRepository() = default;
    AttentionRepository(RepoGeometry geometry, uint64_t schedule_hash, uint64_t codec_id,
                        uint64_t model_hash, int t_start, std::vector<int> expected_steps);

    void put(const RepoKey& key, const Eigen::MatrixXf& q, const Eigen::MatrixXf& k);
    SaOverride get(const RepoKey& key) const;
    bool contains(const RepoKey& key) const { return records_.count(key) > 0; }

    size_t record_count() const { return records_.size(); }
    const RepoGeometry& geometry() const { return geometry_; }
    uint64_t schedule_hash() const { return schedule_hash_; }
    uint64_t codec_id() const { return codec_id_; }
    uint64_t model_hash() const { return model_hash_; }
    int t_start() const { return t_start_; }
    const std::vector<int>& expected_steps() const { return expected_steps_; }

    // every expected (step, layer, head) present; returns missing keys
    std::vector<RepoKey> missing_keys() const;
    bool complete() const { return missing_keys().empty(); }

    // exact accounting: per record 2 * N * head_dim f32 buffers plus a
    // 12-byte key entry (step, layer, head as u32) of index overhead
    uint64_t record_bytes() const;
    uint64_t index_bytes() const { return 12ull * records_.size(); }
    uint64_t memory_footprint() const { return record_bytes() + index_bytes(); }

    void save(const std::filesystem::path& path) const;
    static AttentionRepository load(const std::filesystem::path& path);

    // test support: drop one record to exercise completeness enforcement
    void erase(const RepoKey& key) { records_.erase(key); }

    struct Record {
        Eigen::MatrixXf q;  // N x head_dim
        Eigen::MatrixXf k;
    };
    const std::map<RepoKey, Record>& records() const { return records_; }

private:
    RepoGeometry geometry_;
    uint64_t schedule_hash_ = 0;
    uint64_t codec_id_ = 0;
    uint64_t model_hash_ = 0;
    int t_start_ = 0;
    std::vector<int> expected_steps_;  // ascending
    std::map<RepoKey, Record> records_;
};

// Capture sink: splits each SA event into per-head records. Attach to a
// HookSet with add_capture_all_layers(self_attn, ...).
HookSet::CaptureSink make_repository_sink(AttentionRepository& repo);

// Override supplier: reassembles the per-head records of (step, layer) into a
// full SaOverride; missing records raise a structured error.
HookSet::OverrideSupplier make_repository_supplier(const AttentionRepository& repo);

}  // namespace melodia
