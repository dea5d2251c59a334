#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "gazeforge/tensor.hpp"

namespace gazeforge {

struct ParamEntry {
    std::string name;
    Tensor tensor;
    bool trainable = true;
};

// Ordered, named parameter container. Insertion order is the canonical order
// for checksums, serialization and gradient application.
class ParamSet {
  public:
    Tensor& add(const std::string& name, Tensor t, bool trainable = true);
    bool has(const std::string& name) const;
    const Tensor& get(const std::string& name) const;
    bool trainable(const std::string& name) const;
    // Shape-checked replacement of an existing entry's values.
    void set(const std::string& name, Tensor t);

    const std::vector<ParamEntry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::size_t total_numel() const;
    std::size_t trainable_numel() const;

    // Covers names, order, trainable flags, shapes and values.
    std::uint64_t checksum() const;

  private:
    std::vector<ParamEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Read view over a ParamSet for forward passes. The training constructor
// watches every trainable tensor on the given tape, so lookups return
// recorded handles and gradients land on the tape; the plain constructor
// serves frozen inference.
class ParamView {
  public:
    explicit ParamView(const ParamSet& base);
    ParamView(const ParamSet& base, Tape& tape);

    const Tensor& get(const std::string& name) const;
    const std::vector<std::pair<std::string, Tensor>>& watched() const { return watched_; }

  private:
    const ParamSet* base_;
    std::vector<std::pair<std::string, Tensor>> watched_;
    std::unordered_map<std::string, std::size_t> watched_index_;
};

}  // namespace gazeforge
