#ifndef MRPERC_TREE_MODEL_HPP
#define MRPERC_TREE_MODEL_HPP

// Addressing on the oriented tree with short edges (one level) and long edges
// (k levels), and on the height-(k-1) slab below a vertex ("window").
//
// Digits are 1-based everywhere in the public interface. Slot indices in a
// window follow heap order: index(o) = 0, index(u.j) = d * index(u) + j.

#include <compare>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace mrperc {

// Window bitmasks are 64 bits wide; the exact window chain has its own,
// smaller cap (see window_chain.hpp).
inline constexpr int kMaxWindowSlots = 63;

class TreeParams {
 public:
  // Throws ParameterError if d < 2, k < 2, or the window does not fit in a
  // 64-bit mask.
  TreeParams(int d, int k);

  int d() const noexcept { return d_; }
  int k() const noexcept { return k_; }

  // (d^k - 1) / (d - 1): number of vertices within height k-1 of a vertex.
  int slot_count() const noexcept { return slots_; }
  // First slot of height k-1.
  int top_begin() const noexcept { return top_begin_; }
  // d^e for 0 <= e <= k.
  std::uint64_t pow_d(int e) const noexcept { return pow_[static_cast<std::size_t>(e)]; }
  // Number of long edges out of a vertex.
  std::uint64_t long_fanout() const noexcept { return pow_d(k_); }

  friend bool operator==(const TreeParams&, const TreeParams&) = default;

 private:
  int d_;
  int k_;
  int slots_;
  int top_begin_;
  std::vector<std::uint64_t> pow_;
};

int window_slot_count(const TreeParams& params);

struct VertexPath {
  std::vector<int> digits;

  VertexPath() = default;
  VertexPath(std::initializer_list<int> ds) : digits(ds) {}
  explicit VertexPath(std::vector<int> ds) : digits(std::move(ds)) {}

  bool is_root() const noexcept { return digits.empty(); }
  friend auto operator<=>(const VertexPath&, const VertexPath&) = default;
};

inline int height(const VertexPath& v) noexcept { return static_cast<int>(v.digits.size()); }

VertexPath root();
// Throws DomainError on the root.
VertexPath parent(const VertexPath& v);
// Ancestor m levels up; ancestor_at(v, height(v)) is the root.
VertexPath ancestor_at(const VertexPath& v, int m);
VertexPath concat(const VertexPath& u, const VertexPath& v);
VertexPath child(const VertexPath& v, int digit);
bool is_prefix(const VertexPath& prefix, const VertexPath& v);
// Suffix of v after removing `prefix`; requires is_prefix(prefix, v).
VertexPath strip_prefix(const VertexPath& prefix, const VertexPath& v);
// Throws ParameterError if some digit is outside [1, d].
void validate(const VertexPath& v, const TreeParams& params);
std::string to_string(const VertexPath& v);

// Long-edge selectors: index of s in [d]^k under lexicographic order.
VertexPath long_selector_path(std::uint64_t selector, const TreeParams& params);
std::uint64_t long_selector_index(const VertexPath& s, const TreeParams& params);

// Window slots.
int slot_index(const VertexPath& u, const TreeParams& params);  // DomainError if h(u) >= k
VertexPath slot_vertex(int slot, const TreeParams& params);
int slot_height(int slot, const TreeParams& params);

// Subset of the window slab as a bitmask; bit i <-> slot i.
struct Window {
  std::uint64_t bits = 0;

  constexpr bool empty() const noexcept { return bits == 0; }
  constexpr bool has(int slot) const noexcept { return (bits >> slot) & 1u; }
  constexpr bool has_root() const noexcept { return bits & 1u; }
  int size() const noexcept;
  friend constexpr auto operator<=>(const Window&, const Window&) = default;
};

inline constexpr Window root_window() { return Window{1}; }
Window window_of(const std::vector<VertexPath>& members, const TreeParams& params);
std::vector<VertexPath> window_members(Window w, const TreeParams& params);
// Largest slot height present; DomainError for the empty window.
int window_height(Window w, const TreeParams& params);
// True if the window is a subtree containing the root: every non-root member
// has its parent in the window.
bool is_rooted_subtree(Window w, const TreeParams& params);
std::string to_hex(Window w);

}  // namespace mrperc

#endif  // MRPERC_TREE_MODEL_HPP
