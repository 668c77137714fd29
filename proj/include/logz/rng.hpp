#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace logz {

// Hierarchical counter-derived random stream (xoshiro256++ behind a
// splitmix64-derived key).  Substreams obtained through child() depend only
// on (seed, path of child indices), never on how many numbers were drawn
// from the parent, so work items can be dispatched to threads in any order
// and still reproduce bit-identical draws.
class RngStream {
 public:
  static RngStream from_seed(std::uint64_t seed);

  // Derive the substream at `index`.  Pure function of (key, index).
  RngStream child(std::uint64_t index) const;

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double normal();   // standard normal, Marsaglia polar
  bool coin();       // fair coin

  void fill_normal(Eigen::Ref<Eigen::VectorXd> out);

  std::uint64_t key() const { return key_; }

 private:
  explicit RngStream(std::uint64_t key);

  std::uint64_t key_;
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace logz
