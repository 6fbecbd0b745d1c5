#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>

namespace mlpgcn {

/// Fixed-length per-subject boolean selection with contiguous storage, so it
/// can be viewed as std::span<const bool> (std::vector<bool> cannot).
class Mask {
 public:
  Mask() = default;
  explicit Mask(std::size_t n, bool value = false)
      : size_(n), flags_(std::make_unique<bool[]>(n)) {
    std::fill_n(flags_.get(), n, value);
  }
  Mask(std::initializer_list<bool> values) : Mask(values.size()) {
    std::copy(values.begin(), values.end(), flags_.get());
  }
  template <typename Range>
  static Mask from_indices(std::size_t n, const Range& indices) {
    Mask m(n);
    for (auto i : indices) m[static_cast<std::size_t>(i)] = true;
    return m;
  }

  Mask(const Mask& other) : Mask(other.size_) {
    std::copy_n(other.flags_.get(), size_, flags_.get());
  }
  Mask& operator=(const Mask& other) {
    if (this != &other) *this = Mask(other);
    return *this;
  }
  Mask(Mask&&) noexcept = default;
  Mask& operator=(Mask&&) noexcept = default;

  std::size_t size() const noexcept { return size_; }
  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(flags_.get(), flags_.get() + size_, true));
  }
  bool& operator[](std::size_t i) noexcept { return flags_[i]; }
  bool operator[](std::size_t i) const noexcept { return flags_[i]; }

  std::span<const bool> span() const noexcept { return {flags_.get(), size_}; }
  operator std::span<const bool>() const noexcept { return span(); }

  friend bool operator==(const Mask& a, const Mask& b) {
    return a.size_ == b.size_ && std::equal(a.flags_.get(), a.flags_.get() + a.size_, b.flags_.get());
  }

 private:
  std::size_t size_ = 0;
  std::unique_ptr<bool[]> flags_;
};

}  // namespace mlpgcn
