#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace zno {

// Flat parameter vector with paired gradient storage. Named segments are
// registered once during model construction; after freeze() the layout is
// fixed and spans stay valid for the lifetime of the store.
class ParamStore {
 public:
  struct Segment {
    std::string name;
    std::size_t offset = 0;
    std::size_t size = 0;
    std::vector<int> shape;
  };

  int add(std::string name, std::size_t n, std::vector<int> shape = {}) {
    if (frozen_) throw std::logic_error("ParamStore: add after freeze");
    Segment seg;
    seg.name = std::move(name);
    seg.offset = values_.size();
    seg.size = n;
    seg.shape = std::move(shape);
    segments_.push_back(std::move(seg));
    values_.resize(values_.size() + n, 0.0);
    grads_.resize(values_.size(), 0.0);
    return static_cast<int>(segments_.size()) - 1;
  }

  void freeze() { frozen_ = true; }

  std::size_t size() const { return values_.size(); }
  std::size_t num_segments() const { return segments_.size(); }
  const Segment& segment(int id) const { return segments_.at(id); }

  int find(std::string_view name) const {
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      if (segments_[i].name == name) return static_cast<int>(i);
    }
    return -1;
  }

  std::span<double> values(int id) {
    const Segment& s = segments_.at(id);
    return {values_.data() + s.offset, s.size};
  }
  std::span<const double> values(int id) const {
    const Segment& s = segments_.at(id);
    return {values_.data() + s.offset, s.size};
  }
  std::span<double> grads(int id) {
    const Segment& s = segments_.at(id);
    return {grads_.data() + s.offset, s.size};
  }
  std::span<const double> grads(int id) const {
    const Segment& s = segments_.at(id);
    return {grads_.data() + s.offset, s.size};
  }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> grads() { return grads_; }
  std::span<const double> grads() const { return grads_; }

  void zero_grads() { std::fill(grads_.begin(), grads_.end(), 0.0); }

  std::vector<double> snapshot() const { return values_; }
  void restore(const std::vector<double>& snap) {
    if (snap.size() != values_.size()) {
      throw std::invalid_argument("ParamStore: snapshot size mismatch");
    }
    values_ = snap;
  }

 private:
  std::vector<double> values_;
  std::vector<double> grads_;
  std::vector<Segment> segments_;
  bool frozen_ = false;
};

}  // namespace zno
