#include "gazeforge/param.hpp"

namespace gazeforge {

Tensor& ParamSet::add(const std::string& name, Tensor t, bool trainable) {
    if (index_.count(name)) throw usage_error("ParamSet: duplicate name '" + name + "'");
    index_[name] = entries_.size();
    entries_.push_back(ParamEntry{name, std::move(t), trainable});
    return entries_.back().tensor;
}

bool ParamSet::has(const std::string& name) const { return index_.count(name) > 0; }

const Tensor& ParamSet::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw lookup_error("ParamSet: no parameter '" + name + "'");
    return entries_[it->second].tensor;
}

bool ParamSet::trainable(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw lookup_error("ParamSet: no parameter '" + name + "'");
    return entries_[it->second].trainable;
}

void ParamSet::set(const std::string& name, Tensor t) {
    auto it = index_.find(name);
    if (it == index_.end()) throw lookup_error("ParamSet: no parameter '" + name + "'");
    Tensor& dst = entries_[it->second].tensor;
    if (t.shape() != dst.shape()) {
        throw shape_error("ParamSet: shape " + shape_str(t.shape()) + " does not match '" +
                          name + "' " + shape_str(dst.shape()));
    }
    dst = std::move(t);
}

std::size_t ParamSet::total_numel() const {
    std::size_t n = 0;
    for (const ParamEntry& e : entries_) n += e.tensor.numel();
    return n;
}

std::size_t ParamSet::trainable_numel() const {
    std::size_t n = 0;
    for (const ParamEntry& e : entries_) {
        if (e.trainable) n += e.tensor.numel();
    }
    return n;
}

ParamView::ParamView(const ParamSet& base) : base_(&base) {}

ParamView::ParamView(const ParamSet& base, Tape& tape) : base_(&base) {
    for (const ParamEntry& e : base.entries()) {
        if (!e.trainable) continue;
        watched_index_[e.name] = watched_.size();
        watched_.emplace_back(e.name, tape.watch(e.tensor));
    }
}

const Tensor& ParamView::get(const std::string& name) const {
    auto it = watched_index_.find(name);
    if (it != watched_index_.end()) return watched_[it->second].second;
    return base_->get(name);
}

std::uint64_t ParamSet::checksum() const {
    std::uint64_t h = 1469598103934665603ull;
    auto absorb = [&h](const void* data, std::size_t nbytes) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < nbytes; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    };
    for (const ParamEntry& e : entries_) {
        absorb(e.name.data(), e.name.size());
        const unsigned char flag = e.trainable ? 1 : 0;
        absorb(&flag, 1);
        const std::uint64_t tc = tensor_checksum(e.tensor);
        absorb(&tc, sizeof(tc));
    }
    return h;
}

}  // namespace gazeforge
