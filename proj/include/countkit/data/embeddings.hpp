#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "countkit/error.hpp"

namespace countkit {

/// Word vectors of a single dimension. All-zero vectors are never stored.
class EmbeddingTable {
 public:
  int dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(const std::string& w) const { return entries_.count(w) != 0; }

  const std::vector<double>* find(const std::string& w) const {
    auto it = entries_.find(w);
    return it == entries_.end() ? nullptr : &it->second;
  }

  // Returns true when an existing entry was replaced.
  bool set(const std::string& word, std::vector<double> v) {
    if (dim_ == 0) dim_ = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != dim_) {
      throw ParseError("embedding '" + word + "': dimension " + std::to_string(v.size()) +
                       " differs from " + std::to_string(dim_));
    }
    bool nonzero = false;
    for (double x : v) {
      if (!std::isfinite(x)) throw ParseError("embedding '" + word + "': non-finite value");
      nonzero = nonzero || x != 0.0;
    }
    if (!nonzero) throw ParseError("embedding '" + word + "': zero vector");
    return !entries_.insert_or_assign(word, std::move(v)).second;
  }

  const std::map<std::string, std::vector<double>>& entries() const { return entries_; }

 private:
  int dim_ = 0;
  std::map<std::string, std::vector<double>> entries_;
};

/// Parses "word v1 ... vD" lines. A repeated word replaces the earlier vector
/// and a warning goes to `warn`.
inline EmbeddingTable parse_embeddings(std::istream& in, const std::function<void(const std::string&)>& warn = {}) {
  EmbeddingTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    std::vector<double> v;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError("embeddings line " + std::to_string(line_no) + ": bad number '" + tok +
                         "' for '" + word + "'");
      }
    }
    if (v.empty()) throw ParseError("embeddings line " + std::to_string(line_no) + ": no values for '" + word + "'");
    if (table.set(word, std::move(v)) && warn) {
      warn("embeddings line " + std::to_string(line_no) + ": duplicate word '" + word + "', last occurrence wins");
    }
  }
  return table;
}

inline EmbeddingTable load_embeddings(const std::filesystem::path& path,
                                      const std::function<void(const std::string&)>& warn =
                                          [](const std::string& m) { std::cerr << "warning: " << m << "\n"; }) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open embeddings '" + path.string() + "'");
  return parse_embeddings(in, warn);
}

inline void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write '" + path.string() + "'");
  out.precision(17);
  for (const auto& [w, v] : table.entries()) {
    out << w;
    for (double x : v) out << ' ' << x;
    out << '\n';
  }
}

}  // namespace countkit
