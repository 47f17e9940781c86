#include "mrperc/tree_model.hpp"

#include <bit>
#include <cstdio>
#include <sstream>

#include "mrperc/errors.hpp"

namespace mrperc {

TreeParams::TreeParams(int d, int k) : d_(d), k_(k) {
  if (d < 2 || k < 2) {
    throw ParameterError("tree parameters require d >= 2 and k >= 2 (got d=" +
                         std::to_string(d) + ", k=" + std::to_string(k) + ")");
  }
  std::uint64_t slots = 0;
  std::uint64_t power = 1;
  for (int h = 0; h <= k; ++h) {
    pow_.push_back(power);
    if (h < k) {
      slots += power;
      if (slots > static_cast<std::uint64_t>(kMaxWindowSlots)) {
        throw CapExceeded("window slot count (d^k-1)/(d-1) exceeds the " +
                          std::to_string(kMaxWindowSlots) + "-slot bitmask cap for d=" +
                          std::to_string(d) + ", k=" + std::to_string(k));
      }
      power *= static_cast<std::uint64_t>(d);
    }
  }
  slots_ = static_cast<int>(slots);
  top_begin_ = static_cast<int>(slots - pow_[static_cast<std::size_t>(k - 1)]);
}

int window_slot_count(const TreeParams& params) { return params.slot_count(); }

VertexPath root() { return {}; }

VertexPath parent(const VertexPath& v) {
  if (v.is_root()) throw DomainError("parent of the root is undefined");
  return VertexPath(std::vector<int>(v.digits.begin(), v.digits.end() - 1));
}

VertexPath ancestor_at(const VertexPath& v, int m) {
  if (m < 0 || m > height(v)) {
    throw DomainError("ancestor_at: requested " + std::to_string(m) +
                      " levels above a vertex of height " + std::to_string(height(v)));
  }
  return VertexPath(std::vector<int>(v.digits.begin(), v.digits.end() - m));
}

VertexPath concat(const VertexPath& u, const VertexPath& v) {
  VertexPath out = u;
  out.digits.insert(out.digits.end(), v.digits.begin(), v.digits.end());
  return out;
}

VertexPath child(const VertexPath& v, int digit) {
  VertexPath out = v;
  out.digits.push_back(digit);
  return out;
}

bool is_prefix(const VertexPath& prefix, const VertexPath& v) {
  if (prefix.digits.size() > v.digits.size()) return false;
  for (std::size_t i = 0; i < prefix.digits.size(); ++i) {
    if (prefix.digits[i] != v.digits[i]) return false;
  }
  return true;
}

VertexPath strip_prefix(const VertexPath& prefix, const VertexPath& v) {
  if (!is_prefix(prefix, v)) throw DomainError("strip_prefix: not a prefix");
  return VertexPath(std::vector<int>(v.digits.begin() + static_cast<long>(prefix.digits.size()),
                                     v.digits.end()));
}

void validate(const VertexPath& v, const TreeParams& params) {
  for (int digit : v.digits) {
    if (digit < 1 || digit > params.d()) {
      throw ParameterError("vertex digit " + std::to_string(digit) + " outside [1, " +
                           std::to_string(params.d()) + "]");
    }
  }
}

std::string to_string(const VertexPath& v) {
  if (v.is_root()) return "o";
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < v.digits.size(); ++i) {
    if (i) os << ',';
    os << v.digits[i];
  }
  os << ')';
  return os.str();
}

VertexPath long_selector_path(std::uint64_t selector, const TreeParams& params) {
  std::vector<int> digits(static_cast<std::size_t>(params.k()));
  const auto d = static_cast<std::uint64_t>(params.d());
  for (int pos = params.k() - 1; pos >= 0; --pos) {
    digits[static_cast<std::size_t>(pos)] = static_cast<int>(selector % d) + 1;
    selector /= d;
  }
  return VertexPath(std::move(digits));
}

std::uint64_t long_selector_index(const VertexPath& s, const TreeParams& params) {
  if (height(s) != params.k()) throw DomainError("long selector must have exactly k digits");
  std::uint64_t index = 0;
  for (int digit : s.digits) index = index * static_cast<std::uint64_t>(params.d()) + static_cast<std::uint64_t>(digit - 1);
  return index;
}

int slot_index(const VertexPath& u, const TreeParams& params) {
  if (height(u) >= params.k()) {
    throw DomainError("vertex " + to_string(u) + " lies outside the height-" +
                      std::to_string(params.k() - 1) + " window");
  }
  int index = 0;
  for (int digit : u.digits) index = params.d() * index + digit;
  return index;
}

VertexPath slot_vertex(int slot, const TreeParams& params) {
  if (slot < 0 || slot >= params.slot_count()) {
    throw DomainError("slot " + std::to_string(slot) + " outside the window");
  }
  std::vector<int> digits;
  while (slot > 0) {
    const int digit = (slot - 1) % params.d() + 1;
    digits.push_back(digit);
    slot = (slot - digit) / params.d();
  }
  return VertexPath(std::vector<int>(digits.rbegin(), digits.rend()));
}

int slot_height(int slot, const TreeParams& params) {
  if (slot < 0 || slot >= params.slot_count()) {
    throw DomainError("slot " + std::to_string(slot) + " outside the window");
  }
  std::uint64_t level_end = 1;
  int h = 0;
  while (static_cast<std::uint64_t>(slot) >= level_end) {
    ++h;
    level_end += params.pow_d(h);
  }
  return h;
}

int Window::size() const noexcept { return std::popcount(bits); }

Window window_of(const std::vector<VertexPath>& members, const TreeParams& params) {
  Window w;
  for (const auto& u : members) w.bits |= std::uint64_t{1} << slot_index(u, params);
  return w;
}

std::vector<VertexPath> window_members(Window w, const TreeParams& params) {
  std::vector<VertexPath> out;
  for (int s = 0; s < params.slot_count(); ++s) {
    if (w.has(s)) out.push_back(slot_vertex(s, params));
  }
  return out;
}

int window_height(Window w, const TreeParams& params) {
  if (w.empty()) throw DomainError("height of the empty window is undefined");
  const int top = 63 - std::countl_zero(w.bits);
  return slot_height(top, params);
}

bool is_rooted_subtree(Window w, const TreeParams& params) {
  if (!w.has_root()) return false;
  for (int s = 1; s < params.slot_count(); ++s) {
    if (w.has(s) && !w.has((s - 1) / params.d())) return false;
  }
  return true;
}

std::string to_hex(Window w) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(w.bits));
  return buf;
}

}  // namespace mrperc
