#ifndef MRPERC_POPULATION_HPP
#define MRPERC_POPULATION_HPP

#include <cstdint>
#include <map>

namespace mrperc {

// Types of a finite-type branching process are opaque 64-bit ids; window
// types use their bitmask.
using TypeId = std::uint64_t;

// Count per type. Absent keys mean zero; the empty map is the extinct state.
using Population = std::map<TypeId, std::uint64_t>;

inline std::uint64_t total_size(const Population& pop) {
  std::uint64_t n = 0;
  for (const auto& [type, count] : pop) n += count;
  return n;
}

inline void add_to(Population& into, const Population& from, std::uint64_t times = 1) {
  for (const auto& [type, count] : from) {
    if (count) into[type] += count * times;
  }
}

}  // namespace mrperc

#endif  // MRPERC_POPULATION_HPP
