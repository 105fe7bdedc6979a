#ifndef AOILAB_CHECKPOINT_HPP
#define AOILAB_CHECKPOINT_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "aoilab/nn.hpp"

namespace aoilab::nn {

// Text checkpoint:
//
//   aoilab-checkpoint 1
//   gate_order i f g o
//   shape <n_x> <n_h> <n_fc> <n_o>
//   seed <seed>
//   tensor <name> <rows> <cols>
//   <rows*cols hexfloat values, row-major>
//   ...
//   end
//
// Values are written as hexadecimal floating point, so a save/load cycle
// reproduces every parameter bit for bit.

struct Checkpoint {
  StackParams params;
  std::uint64_t seed = 0;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_checkpoint(std::ostream& os, const StackParams& params, std::uint64_t seed);
Checkpoint read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const StackParams& params,
                     std::uint64_t seed);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace aoilab::nn

#endif  // AOILAB_CHECKPOINT_HPP
