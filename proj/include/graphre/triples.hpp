#pragma once

#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace graphre {

// collapse internal whitespace runs to single spaces, trim ends;
// comparison stays case-sensitive
inline std::string normalize_text(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      pending_space = !out.empty();
    } else {
      if (pending_space) out += ' ';
      pending_space = false;
      out += c;
    }
  }
  return out;
}

// Entity types are carried for rendering but never take part in matching:
// a triple is correct if head text, relation, and tail text match.
struct TripleItem {
  std::string head;
  std::string rel;
  std::string tail;
  std::string head_type;
  std::string tail_type;

  friend bool operator<(const TripleItem& a, const TripleItem& b) {
    return std::tie(a.head, a.rel, a.tail) < std::tie(b.head, b.rel, b.tail);
  }
  friend bool operator==(const TripleItem& a, const TripleItem& b) {
    return std::tie(a.head, a.rel, a.tail) == std::tie(b.head, b.rel, b.tail);
  }
};

class TripleSet {
 public:
  void insert(TripleItem t) {
    t.head = normalize_text(t.head);
    t.rel = normalize_text(t.rel);
    t.tail = normalize_text(t.tail);
    items_.insert(std::move(t));
  }

  void insert(const std::string& head, const std::string& rel,
              const std::string& tail, const std::string& head_type = "",
              const std::string& tail_type = "") {
    insert(TripleItem{head, rel, tail, head_type, tail_type});
  }

  size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  bool contains(const TripleItem& t) const {
    TripleItem k{normalize_text(t.head), normalize_text(t.rel),
                 normalize_text(t.tail), "", ""};
    return items_.count(k) > 0;
  }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  size_t intersection_size(const TripleSet& other) const {
    size_t n = 0;
    for (const auto& t : items_)
      if (other.items_.count(t)) ++n;
    return n;
  }

  friend bool operator==(const TripleSet& a, const TripleSet& b) {
    return a.items_ == b.items_;
  }

 private:
  std::set<TripleItem> items_;
};

}  // namespace graphre
