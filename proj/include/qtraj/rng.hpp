/* Copyright 2026 The qtraj Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef QTRAJ_RNG_HPP
#define QTRAJ_RNG_HPP

#include <array>
#include <cstdint>

namespace qtraj {

/// Philox4x32-10 block function (Salmon et al., SC'11).
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key);

/// Independent variate stream for one trajectory.
///
/// The master seed is the Philox key; the counter carries the stream id and a
/// lane (sub-stream) in its upper words and a block index in its low word.
/// A stream therefore never depends on how many other streams were drawn
/// before it or on which worker draws it.
class RngStream {
public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id,
            std::uint32_t lane = 0);

  std::uint64_t master_seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint32_t lane() const { return lane_; }

  std::uint64_t next_u64();
  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  /// Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal();

private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint32_t lane_;
  std::uint32_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// Lanes used by the trajectory engine; distinct lanes never overlap.
namespace lanes {
inline constexpr std::uint32_t kBackward = 0;
inline constexpr std::uint32_t kForward = 1;
inline constexpr std::uint32_t kTesting = 7;
} // namespace lanes

} // namespace qtraj

#endif
