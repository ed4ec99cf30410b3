#include "streamseg/memory_bank.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace streamseg {

using nlohmann::json;

std::size_t ObjectRegistry::add(ObjectId id) {
    if (contains(id)) {
        throw Error(ErrorCode::already_registered, "object " + std::to_string(id) + " already registered");
    }
    const std::size_t slot = obj_ids_.size();
    obj_ids_.push_back(id);
    slot_of_.emplace(id, slot);
    return slot;
}

std::size_t ObjectRegistry::slot_of(ObjectId id) const {
    auto it = slot_of_.find(id);
    if (it == slot_of_.end()) {
        throw Error(ErrorCode::missing_frame, "object " + std::to_string(id) + " is not registered");
    }
    return it->second;
}

// ---------------------------------------------------------------------------
// Preload payload

std::string PreloadPayload::to_text() const {
    json j;
    j["format"] = "streamseg-preload";
    j["version"] = version;
    j["feature_dim"] = feature_dim;
    j["registry"] = registry;
    json entries_json = json::array();
    for (const auto& e : entries) {
        json rows = json::array();
        for (const auto& r : e.rows) rows.push_back(r);
        entries_json.push_back({{"frame_idx", e.frame_idx}, {"is_condition", e.is_condition}, {"rows", rows}});
    }
    j["entries"] = std::move(entries_json);
    return j.dump(1) + "\n";
}

PreloadPayload PreloadPayload::parse(std::string_view text) {
    PreloadPayload p;
    try {
        const json j = json::parse(text);
        if (j.value("format", std::string{}) != "streamseg-preload") {
            throw Error(ErrorCode::format, "not a preload bank payload");
        }
        p.version = j.at("version").get<int>();
        if (p.version != kVersion) {
            throw Error(ErrorCode::format, "unsupported preload version " + std::to_string(p.version));
        }
        p.feature_dim = j.at("feature_dim").get<std::size_t>();
        p.registry = j.at("registry").get<std::vector<ObjectId>>();
        for (const auto& e : j.at("entries")) {
            Entry entry;
            entry.frame_idx = e.at("frame_idx").get<FrameIndex>();
            entry.is_condition = e.at("is_condition").get<bool>();
            entry.rows = e.at("rows").get<std::vector<MemoryRow>>();
            p.entries.push_back(std::move(entry));
        }
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::format, std::string("malformed preload payload: ") + ex.what());
    }
    return p;
}

void PreloadPayload::write_file(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
    out << to_text();
}

PreloadPayload PreloadPayload::read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io, "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

// ---------------------------------------------------------------------------
// MemoryBank

MemoryBank::MemoryBank(std::size_t feature_dim) : feature_dim_(feature_dim) {
    if (feature_dim_ == 0) throw Error(ErrorCode::config, "feature dimension must be positive");
}

MemoryBank MemoryBank::init_state(std::size_t feature_dim, const PreloadPayload* preload) {
    MemoryBank bank(feature_dim);
    if (preload == nullptr) return bank;

    if (preload->version != PreloadPayload::kVersion) {
        throw Error(ErrorCode::format, "unsupported preload version");
    }
    if (preload->feature_dim != feature_dim) {
        throw Error(ErrorCode::format, "preload feature dimension " + std::to_string(preload->feature_dim) +
                                           " does not match " + std::to_string(feature_dim));
    }
    for (ObjectId id : preload->registry) {
        if (bank.registry_.contains(id)) {
            throw Error(ErrorCode::format, "duplicate object id " + std::to_string(id) + " in preload registry");
        }
        bank.register_object(id);
    }

    std::vector<const PreloadPayload::Entry*> sorted;
    for (const auto& e : preload->entries) sorted.push_back(&e);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->frame_idx < b->frame_idx; });
    for (std::size_t k = 1; k < sorted.size(); ++k) {
        if (sorted[k]->frame_idx == sorted[k - 1]->frame_idx) {
            throw Error(ErrorCode::format, "duplicate preload frame " + std::to_string(sorted[k]->frame_idx));
        }
    }

    const auto n = static_cast<FrameIndex>(sorted.size());
    for (FrameIndex k = 0; k < n; ++k) {
        const auto& src = *sorted[static_cast<std::size_t>(k)];
        if (src.rows.size() != bank.registry_.size()) {
            throw Error(ErrorCode::format, "preload frame " + std::to_string(src.frame_idx) + " has " +
                                               std::to_string(src.rows.size()) + " rows for " +
                                               std::to_string(bank.registry_.size()) + " objects");
        }
        for (const auto& row : src.rows) {
            if (row.size() != feature_dim) {
                throw Error(ErrorCode::format, "preload row width mismatch at frame " + std::to_string(src.frame_idx));
            }
        }
        const FrameIndex idx = -n + k;
        bank.write_frame_output(idx, src.is_condition, src.rows);
        bank.preload_frame_inds_.insert(idx);
        bank.preload_source_idx_.emplace(idx, src.frame_idx);
    }
    return bank;
}

void MemoryBank::register_object(ObjectId id) {
    registry_.add(id);
    per_obj_outputs_.emplace(id, PerObjectOutputs{});
}

std::vector<FrameIndex> MemoryBank::update_memory_for_new_ids(FrameIndex current_idx,
                                                              std::optional<std::int64_t> max_update_frames) {
    std::vector<FrameIndex> updated;
    const std::size_t target = registry_.size();
    for (auto& [idx, e] : entries_) {
        const bool in_window =
            !max_update_frames || std::llabs(current_idx - idx) < *max_update_frames;
        const bool is_preload = preload_frame_inds_.count(idx) != 0;
        if (!(in_window || is_preload)) continue;
        if (e.registry_size_at_update == target) continue;
        while (e.rows.size() < target) e.rows.push_back(null_row());
        e.registry_size_at_update = target;
        mirror_entry(e);
        updated.push_back(idx);
    }
    return updated;
}

std::vector<FrameIndex> MemoryBank::select_attention_frames(FrameIndex current_idx, std::size_t limit,
                                                            TrackDirection direction) const {
    std::set<FrameIndex> out;
    auto usable = [&](const MemoryEntry& e) {
        return is_current_shaped(e) && preload_frame_inds_.count(e.frame_idx) == 0;
    };

    if (limit > 0) {
        auto below_any = std::size_t{0};
        auto above_any = std::size_t{0};
        auto below_cond = std::size_t{0};
        auto above_cond = std::size_t{0};
        const bool forward = direction == TrackDirection::forward;

        // Walk downwards from current_idx.
        auto it = entries_.lower_bound(current_idx);
        while (it != entries_.begin()) {
            --it;
            const MemoryEntry& e = it->second;
            if (!usable(e)) continue;
            if (forward && below_any < limit) {
                out.insert(e.frame_idx);
                ++below_any;
            } else if (!forward && e.is_condition && below_cond < limit) {
                out.insert(e.frame_idx);
                ++below_cond;
            }
            if ((forward && below_any >= limit) || (!forward && below_cond >= limit)) break;
        }
        // Walk upwards from current_idx.
        for (auto up = entries_.upper_bound(current_idx); up != entries_.end(); ++up) {
            const MemoryEntry& e = up->second;
            if (!usable(e)) continue;
            if (!forward && above_any < limit) {
                out.insert(e.frame_idx);
                ++above_any;
            } else if (forward && e.is_condition && above_cond < limit) {
                out.insert(e.frame_idx);
                ++above_cond;
            }
            if ((!forward && above_any >= limit) || (forward && above_cond >= limit)) break;
        }
    }

    for (FrameIndex p : preload_frame_inds_) {
        const MemoryEntry& e = entries_.at(p);
        if (e.is_condition && is_current_shaped(e)) out.insert(p);
    }
    return {out.begin(), out.end()};
}

void MemoryBank::write_frame_output(FrameIndex frame_idx, bool is_condition, std::vector<MemoryRow> rows) {
    if (rows.size() != registry_.size()) {
        throw Error(ErrorCode::shape_mismatch, "frame " + std::to_string(frame_idx) + ": " +
                                                   std::to_string(rows.size()) + " rows for " +
                                                   std::to_string(registry_.size()) + " registered objects");
    }
    for (const auto& r : rows) {
        if (r.size() != feature_dim_) {
            throw Error(ErrorCode::shape_mismatch, "frame " + std::to_string(frame_idx) + ": row width " +
                                                       std::to_string(r.size()) + " != " +
                                                       std::to_string(feature_dim_));
        }
    }
    auto existing = entries_.find(frame_idx);
    const bool was_condition = existing != entries_.end() && existing->second.is_condition;
    if (existing != entries_.end()) unmirror(frame_idx);

    MemoryEntry e;
    e.frame_idx = frame_idx;
    e.is_condition = is_condition || was_condition;
    e.rows = std::move(rows);
    e.registry_size_at_update = registry_.size();
    if (e.is_condition) consolidated_frame_inds_.insert(frame_idx);
    mirror_entry(e);
    entries_[frame_idx] = std::move(e);
}

std::vector<FrameIndex> MemoryBank::release_old_frames(FrameIndex current_idx, std::int64_t retention) {
    const FrameIndex cutoff = current_idx - retention + 1;
    std::vector<FrameIndex> released;
    for (auto it = entries_.begin(); it != entries_.end() && it->first < cutoff;) {
        const FrameIndex idx = it->first;
        ++it;
        if (preload_frame_inds_.count(idx) != 0) continue;
        erase_entry(idx);
        released.push_back(idx);
    }
    return released;
}

PreloadPayload MemoryBank::export_preload(const std::vector<FrameIndex>& frame_indices) const {
    std::set<FrameIndex> wanted(frame_indices.begin(), frame_indices.end());
    PreloadPayload p;
    p.feature_dim = feature_dim_;
    p.registry = registry_.obj_ids();
    for (FrameIndex idx : wanted) {
        auto it = entries_.find(idx);
        if (it == entries_.end()) {
            throw Error(ErrorCode::missing_frame, "cannot export frame " + std::to_string(idx) + ": not in the bank");
        }
        PreloadPayload::Entry out;
        auto src = preload_source_idx_.find(idx);
        out.frame_idx = src != preload_source_idx_.end() ? src->second : idx;
        out.is_condition = true;
        out.rows = it->second.rows;
        while (out.rows.size() < registry_.size()) out.rows.push_back(null_row());
        p.entries.push_back(std::move(out));
    }
    return p;
}

const MemoryEntry* MemoryBank::entry(FrameIndex frame_idx) const {
    auto it = entries_.find(frame_idx);
    return it == entries_.end() ? nullptr : &it->second;
}

bool MemoryBank::has_memory(FrameIndex frame_idx, ObjectId obj) const {
    const MemoryEntry* e = entry(frame_idx);
    if (e == nullptr || !registry_.contains(obj)) return false;
    const std::size_t slot = registry_.slot_of(obj);
    if (slot >= e->rows.size()) return false;
    const auto& row = e->rows[slot];
    return std::any_of(row.begin(), row.end(), [](float v) { return v != 0.0f; });
}

std::set<FrameIndex> MemoryBank::cond_frame_indices() const {
    std::set<FrameIndex> s;
    for (const auto& [idx, e] : entries_) {
        if (e.is_condition) s.insert(idx);
    }
    return s;
}

std::set<FrameIndex> MemoryBank::non_cond_frame_indices() const {
    std::set<FrameIndex> s;
    for (const auto& [idx, e] : entries_) {
        if (!e.is_condition) s.insert(idx);
    }
    return s;
}

void MemoryBank::mirror_entry(const MemoryEntry& e) {
    const auto& ids = registry_.obj_ids();
    for (std::size_t slot = 0; slot < e.rows.size() && slot < ids.size(); ++slot) {
        auto& per = per_obj_outputs_[ids[slot]];
        auto& target = e.is_condition ? per.cond_frame_outputs : per.non_cond_frame_outputs;
        target[e.frame_idx] = e.rows[slot];
    }
}

void MemoryBank::unmirror(FrameIndex frame_idx) {
    for (auto& [id, per] : per_obj_outputs_) {
        per.cond_frame_outputs.erase(frame_idx);
        per.non_cond_frame_outputs.erase(frame_idx);
    }
}

void MemoryBank::erase_entry(FrameIndex frame_idx) {
    unmirror(frame_idx);
    consolidated_frame_inds_.erase(frame_idx);
    entries_.erase(frame_idx);
}

std::vector<std::string> MemoryBank::invariant_violations() const {
    std::vector<std::string> out;
    for (FrameIndex c : consolidated_frame_inds_) {
        const MemoryEntry* e = entry(c);
        if ((e == nullptr || !e->is_condition) && preload_frame_inds_.count(c) == 0) {
            out.push_back("consolidated frame " + std::to_string(c) + " has no condition entry");
        }
    }
    for (FrameIndex p : preload_frame_inds_) {
        if (!has_entry(p)) out.push_back("preload frame " + std::to_string(p) + " missing");
    }
    if (per_obj_outputs_.size() != registry_.size()) out.push_back("per-object outputs do not match registry");
    for (ObjectId id : registry_.obj_ids()) {
        if (per_obj_outputs_.count(id) == 0) out.push_back("object " + std::to_string(id) + " has no outputs");
    }
    for (const auto& [idx, e] : entries_) {
        if (e.rows.size() != e.registry_size_at_update) {
            out.push_back("frame " + std::to_string(idx) + " row count differs from its registry size");
        }
        if (e.registry_size_at_update > registry_.size()) {
            out.push_back("frame " + std::to_string(idx) + " is shaped for a larger registry");
        }
        for (std::size_t slot = 0; slot < e.rows.size(); ++slot) {
            const auto& per = per_obj_outputs_.at(registry_.obj_ids()[slot]);
            const auto& m = e.is_condition ? per.cond_frame_outputs : per.non_cond_frame_outputs;
            auto it = m.find(idx);
            if (it == m.end() || it->second != e.rows[slot]) {
                out.push_back("per-object mirror out of sync at frame " + std::to_string(idx));
            }
        }
    }
    for (const auto& [id, per] : per_obj_outputs_) {
        for (const auto& [idx, row] : per.cond_frame_outputs) {
            if (!has_entry(idx) || per.non_cond_frame_outputs.count(idx) != 0) {
                out.push_back("stale per-object condition output at frame " + std::to_string(idx));
            }
        }
        for (const auto& [idx, row] : per.non_cond_frame_outputs) {
            if (!has_entry(idx)) out.push_back("stale per-object output at frame " + std::to_string(idx));
        }
    }
    return out;
}

std::vector<FrameIndex> release_old_frames(MemoryBank& bank, FrameStore& store, FrameIndex current_idx,
                                           std::int64_t retention) {
    auto released = bank.release_old_frames(current_idx, retention);
    store.release_frames_before(current_idx - retention + 1, bank.preload_frame_inds());
    return released;
}

}  // namespace streamseg
