#include "mora/molecule.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "mora/errors.hpp"

namespace mora {

const char* const kFeatureElements[kElementCount] = {"C", "N", "O", "S", "P", "F", "Cl", "Br", "I", "H"};

namespace {

// Element symbols accepted inside brackets.
const std::set<std::string, std::less<>> kElements = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",  "S",  "Cl", "Ar",
    "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr",
    "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe",
    "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf",
    "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr"};

const std::set<std::string, std::less<>> kAromaticBracket = {"b", "c", "n", "o", "p", "s", "se", "as"};
const std::set<std::string, std::less<>> kOrganic = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"};
const std::set<std::string, std::less<>> kAromaticOrganic = {"b", "c", "n", "o", "p", "s"};

std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

class SmilesParser {
 public:
  explicit SmilesParser(std::string_view s) : s_(s) {}

  MolecularGraph run() {
    if (s_.empty()) throw ParseError(0, "empty SMILES");
    while (pos_ < s_.size()) step();
    if (pending_) throw ParseError(pending_->offset, "bond symbol not followed by an atom");
    if (!branches_.empty()) throw ParseError(branches_.back().offset, "unclosed '('");
    if (!rings_.empty()) {
      const auto& [num, open] = *rings_.begin();
      throw ParseError(open.offset, "unmatched ring closure " + std::to_string(num));
    }
    if (g_.atoms.empty()) throw ParseError(0, "no atoms");
    mark_rings();
    return std::move(g_);
  }

 private:
  struct PendingBond {
    int order;
    std::size_t offset;
  };
  struct Branch {
    std::size_t atom;
    std::size_t atoms_before;
    std::size_t offset;
  };
  struct OpenRing {
    std::size_t atom;
    std::optional<int> order;
    std::size_t offset;
  };

  char peek(std::size_t ahead = 0) const { return pos_ + ahead < s_.size() ? s_[pos_ + ahead] : '\0'; }

  void step() {
    const char c = s_[pos_];
    const std::size_t at = pos_;
    switch (c) {
      case '(': {
        if (!prev_) throw ParseError(at, "branch without a preceding atom");
        if (pending_) throw ParseError(pending_->offset, "bond symbol before '('");
        branches_.push_back({*prev_, g_.atoms.size(), at});
        ++pos_;
        return;
      }
      case ')': {
        if (branches_.empty()) throw ParseError(at, "unmatched ')'");
        if (pending_) throw ParseError(pending_->offset, "bond symbol not followed by an atom");
        if (g_.atoms.size() == branches_.back().atoms_before) throw ParseError(at, "empty branch");
        prev_ = branches_.back().atom;
        branches_.pop_back();
        ++pos_;
        return;
      }
      case '-':
      case '=':
      case '#':
      case ':': {
        if (!prev_) throw ParseError(at, "bond without a preceding atom");
        if (pending_) throw ParseError(at, "two consecutive bond symbols");
        pending_ = PendingBond{c == '=' ? 2 : c == '#' ? 3 : 1, at};
        ++pos_;
        return;
      }
      case '/':
      case '\\':
        throw ParseError(at, "stereo bonds are not supported");
      case '$':
        throw ParseError(at, "quadruple bonds are not supported");
      case '.': {
        if (!prev_) throw ParseError(at, "'.' without a preceding atom");
        if (pending_) throw ParseError(pending_->offset, "bond symbol before '.'");
        prev_.reset();
        ++pos_;
        return;
      }
      case '%': {
        if (!std::isdigit(static_cast<unsigned char>(peek(1))) || !std::isdigit(static_cast<unsigned char>(peek(2)))) {
          throw ParseError(at, "'%' must be followed by two digits");
        }
        const int num = (peek(1) - '0') * 10 + (peek(2) - '0');
        pos_ += 3;
        ring_closure(num, at);
        return;
      }
      case '[':
        bracket_atom();
        return;
      default:
        break;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      ++pos_;
      ring_closure(c - '0', at);
      return;
    }
    organic_atom();
  }

  void organic_atom() {
    const std::size_t at = pos_;
    const char c = s_[pos_];
    std::string sym(1, c);
    if ((c == 'C' && peek(1) == 'l') || (c == 'B' && peek(1) == 'r')) sym.push_back(peek(1));
    if (kOrganic.count(sym)) {
      pos_ += sym.size();
      add_atom(Atom{sym, 0, false, false}, at);
      return;
    }
    if (kAromaticOrganic.count(sym)) {
      ++pos_;
      add_atom(Atom{capitalize(sym), 0, true, true}, at);
      return;
    }
    if (c == '@') throw ParseError(at, "stereo marks are not supported");
    std::string shown = std::isprint(static_cast<unsigned char>(c)) ? std::string(1, c) : "\\x" + hex(c);
    throw ParseError(at, "unexpected symbol '" + shown + "'");
  }

  static std::string hex(char c) {
    static const char* digits = "0123456789abcdef";
    const auto u = static_cast<unsigned char>(c);
    return {digits[u >> 4], digits[u & 15]};
  }

  void bracket_atom() {
    const std::size_t open = pos_;
    ++pos_;  // '['
    while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;  // isotope, ignored
    const std::size_t sym_at = pos_;
    std::string sym;
    bool aromatic = false;
    const char c0 = peek();
    if (std::isupper(static_cast<unsigned char>(c0))) {
      const char c1 = peek(1);
      if (std::islower(static_cast<unsigned char>(c1)) && kElements.count(std::string{c0, c1})) {
        sym = std::string{c0, c1};
      } else if (kElements.count(std::string(1, c0))) {
        sym = std::string(1, c0);
      }
    } else if (std::islower(static_cast<unsigned char>(c0))) {
      const char c1 = peek(1);
      if (std::islower(static_cast<unsigned char>(c1)) && kAromaticBracket.count(std::string{c0, c1})) {
        sym = std::string{c0, c1};
      } else if (kAromaticBracket.count(std::string(1, c0))) {
        sym = std::string(1, c0);
      }
      aromatic = !sym.empty();
    }
    if (sym.empty()) throw ParseError(sym_at, "unknown element in bracket atom");
    pos_ += sym.size();
    if (peek() == '@') throw ParseError(pos_, "stereo marks are not supported");
    if (peek() == 'H') {  // explicit hydrogen count, ignored (hydrogens are implicit)
      ++pos_;
      while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
    }
    int charge = 0;
    if (peek() == '+' || peek() == '-') {
      const char sign = peek();
      const int unit = sign == '+' ? 1 : -1;
      ++pos_;
      if (std::isdigit(static_cast<unsigned char>(peek()))) {
        int mag = 0;
        std::size_t n = 0;
        while (std::isdigit(static_cast<unsigned char>(peek()))) {
          if (++n > 2) throw ParseError(pos_, "charge magnitude too large");
          mag = mag * 10 + (peek() - '0');
          ++pos_;
        }
        charge = unit * mag;
      } else {
        charge = unit;
        while (peek() == sign) {
          charge += unit;
          ++pos_;
          if (charge > 15 || charge < -15) throw ParseError(pos_, "charge magnitude too large");
        }
      }
    }
    if (peek() == ':') {  // atom class, ignored
      ++pos_;
      if (!std::isdigit(static_cast<unsigned char>(peek()))) throw ParseError(pos_, "atom class needs digits");
      while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
    }
    if (peek() != ']') {
      if (pos_ >= s_.size()) throw ParseError(open, "unclosed '['");
      throw ParseError(pos_, "unexpected character in bracket atom");
    }
    ++pos_;
    add_atom(Atom{capitalize(sym), charge, aromatic, aromatic}, open);
  }

  void add_atom(Atom a, std::size_t at) {
    const std::size_t idx = g_.atoms.size();
    g_.atoms.push_back(std::move(a));
    if (prev_) {
      add_bond(*prev_, idx, pending_ ? pending_->order : 1, at);
    } else if (pending_) {
      throw ParseError(pending_->offset, "bond without a preceding atom");
    }
    pending_.reset();
    prev_ = idx;
  }

  void add_bond(std::size_t i, std::size_t j, int order, std::size_t at) {
    if (i == j) throw ParseError(at, "ring closure bonds an atom to itself");
    const auto key = std::minmax(i, j);
    if (!bond_keys_.insert(key).second) throw ParseError(at, "duplicate bond between the same two atoms");
    g_.bonds.push_back(Bond{i, j, order});
  }

  void ring_closure(int num, std::size_t at) {
    if (!prev_) throw ParseError(at, "ring closure without a preceding atom");
    std::optional<int> order;
    if (pending_) order = pending_->order;
    pending_.reset();
    auto it = rings_.find(num);
    if (it == rings_.end()) {
      rings_.emplace(num, OpenRing{*prev_, order, at});
      return;
    }
    const OpenRing open = it->second;
    rings_.erase(it);
    if (order && open.order && *order != *open.order) throw ParseError(at, "ring closure bond orders disagree");
    add_bond(open.atom, *prev_, order.value_or(open.order.value_or(1)), at);
  }

  // Ring members are the atoms touching at least one non-bridge bond.
  void mark_rings() {
    const std::size_t n = g_.atoms.size();
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(n);  // (neighbor, bond index)
    for (std::size_t b = 0; b < g_.bonds.size(); ++b) {
      adj[g_.bonds[b].i].push_back({g_.bonds[b].j, b});
      adj[g_.bonds[b].j].push_back({g_.bonds[b].i, b});
    }
    std::vector<std::size_t> disc(n, 0), low(n, 0);
    std::vector<bool> bridge(g_.bonds.size(), false);
    std::size_t timer = 0;
    struct Frame {
      std::size_t v;
      std::size_t parent_bond;
      std::size_t next;
    };
    const std::size_t none = static_cast<std::size_t>(-1);
    for (std::size_t root = 0; root < n; ++root) {
      if (disc[root]) continue;
      std::vector<Frame> stack{{root, none, 0}};
      disc[root] = low[root] = ++timer;
      while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next < adj[f.v].size()) {
          const auto [w, b] = adj[f.v][f.next++];
          if (b == f.parent_bond) continue;
          if (disc[w]) {
            low[f.v] = std::min(low[f.v], disc[w]);
          } else {
            disc[w] = low[w] = ++timer;
            stack.push_back({w, b, 0});
          }
        } else {
          const Frame done = f;
          stack.pop_back();
          if (!stack.empty()) {
            Frame& parent = stack.back();
            low[parent.v] = std::min(low[parent.v], low[done.v]);
            if (low[done.v] > disc[parent.v]) bridge[done.parent_bond] = true;
          }
        }
      }
    }
    for (std::size_t b = 0; b < g_.bonds.size(); ++b) {
      if (bridge[b]) continue;
      g_.atoms[g_.bonds[b].i].ring = true;
      g_.atoms[g_.bonds[b].j].ring = true;
    }
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  MolecularGraph g_;
  std::optional<std::size_t> prev_;
  std::optional<PendingBond> pending_;
  std::vector<Branch> branches_;
  std::map<int, OpenRing> rings_;
  std::set<std::pair<std::size_t, std::size_t>> bond_keys_;
};

constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t combine(std::uint64_t seed, std::uint64_t v) { return mix64(seed ^ mix64(v)); }

std::uint64_t hash_string(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::vector<std::size_t> MolecularGraph::degrees() const {
  std::vector<std::size_t> deg(atoms.size(), 0);
  for (const Bond& b : bonds) {
    ++deg[b.i];
    ++deg[b.j];
  }
  return deg;
}

std::vector<std::vector<std::size_t>> MolecularGraph::adjacency() const {
  std::vector<std::vector<std::size_t>> adj(atoms.size());
  for (const Bond& b : bonds) {
    adj[b.i].push_back(b.j);
    adj[b.j].push_back(b.i);
  }
  return adj;
}

MolecularGraph parse_smiles(std::string_view smiles) { return SmilesParser(smiles).run(); }

void validate_graph(const MolecularGraph& g) {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const Bond& b : g.bonds) {
    if (b.i >= g.atoms.size() || b.j >= g.atoms.size()) throw ContractError("bond endpoint out of range");
    if (b.i == b.j) throw ContractError("self-loop on atom " + std::to_string(b.i));
    if (b.order < 1 || b.order > 3) throw ContractError("bond order must be 1, 2 or 3");
    if (!seen.insert(std::minmax(b.i, b.j)).second) throw ContractError("duplicate bond");
  }
}

MolecularGraph permute_graph(const MolecularGraph& g, const std::vector<std::size_t>& perm) {
  const std::size_t n = g.atoms.size();
  if (perm.size() != n) throw ContractError("permutation length differs from atom count");
  std::vector<bool> hit(n, false);
  for (std::size_t p : perm) {
    if (p >= n || hit[p]) throw ContractError("permutation is not a bijection");
    hit[p] = true;
  }
  MolecularGraph out;
  out.atoms.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.atoms[perm[i]] = g.atoms[i];
  out.bonds.reserve(g.bonds.size());
  for (const Bond& b : g.bonds) out.bonds.push_back(Bond{perm[b.i], perm[b.j], b.order});
  return out;
}

std::string write_smiles(const MolecularGraph& g) {
  validate_graph(g);
  const std::size_t n = g.atoms.size();
  std::vector<std::vector<std::pair<std::size_t, int>>> adj(n);
  for (const Bond& b : g.bonds) {
    adj[b.i].push_back({b.j, b.order});
    adj[b.j].push_back({b.i, b.order});
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());

  // Pass 1: DFS tree; non-tree edges become ring closures.
  std::vector<std::size_t> order;
  std::vector<std::size_t> parent(n, n);
  std::vector<std::vector<std::size_t>> children(n);
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> roots;
  for (std::size_t r = 0; r < n; ++r) {
    if (seen[r]) continue;
    roots.push_back(r);
    std::vector<std::size_t> stack{r};
    while (!stack.empty()) {
      const std::size_t v = stack.back();
      stack.pop_back();
      if (seen[v]) continue;
      seen[v] = true;
      order.push_back(v);
      if (parent[v] != n) children[parent[v]].push_back(v);
      for (auto it = adj[v].rbegin(); it != adj[v].rend(); ++it) {
        if (!seen[it->first]) {
          parent[it->first] = v;
          stack.push_back(it->first);
        }
      }
    }
  }
  std::vector<std::size_t> rank(n);
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = i;

  struct RingEnd {
    std::size_t partner;
    int order;
    bool opens;
  };
  std::vector<std::vector<RingEnd>> ring_ends(n);
  for (const Bond& b : g.bonds) {
    if (parent[b.i] == b.j || parent[b.j] == b.i) continue;
    const std::size_t first = rank[b.i] < rank[b.j] ? b.i : b.j;
    const std::size_t second = first == b.i ? b.j : b.i;
    ring_ends[first].push_back({second, b.order, true});
    ring_ends[second].push_back({first, b.order, false});
  }
  for (std::size_t v = 0; v < n; ++v) {
    std::sort(ring_ends[v].begin(), ring_ends[v].end(),
              [&](const RingEnd& a, const RingEnd& b) { return rank[a.partner] < rank[b.partner]; });
  }

  auto bond_symbol = [](int ord) -> std::string { return ord == 2 ? "=" : ord == 3 ? "#" : ""; };
  auto atom_text = [&](const Atom& a) -> std::string {
    if (a.charge == 0) {
      if (a.aromatic) {
        std::string low = a.element;
        low[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(low[0])));
        if (kAromaticOrganic.count(low)) return low;
      } else if (kOrganic.count(a.element)) {
        return a.element;
      }
    }
    std::string s = "[";
    if (a.aromatic) {
      std::string low = a.element;
      low[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(low[0])));
      s += low;
    } else {
      s += a.element;
    }
    if (a.charge > 0) s += "+" + (a.charge > 1 ? std::to_string(a.charge) : "");
    if (a.charge < 0) s += "-" + (a.charge < -1 ? std::to_string(-a.charge) : "");
    return s + "]";
  };

  std::map<std::pair<std::size_t, std::size_t>, int> ring_label;
  std::set<int> free_labels;
  int next_label = 1;
  auto take_label = [&]() {
    if (!free_labels.empty()) {
      int l = *free_labels.begin();
      free_labels.erase(free_labels.begin());
      return l;
    }
    return next_label++;
  };
  auto label_text = [](int l) { return l < 10 ? std::to_string(l) : "%" + std::to_string(l); };

  std::string out;
  // Pass 2: emit. Explicit stack of (atom, state) to stay iterative.
  struct Emit {
    std::size_t v;
    std::size_t child = 0;
    bool opened_paren = false;
  };
  for (std::size_t ri = 0; ri < roots.size(); ++ri) {
    if (ri) out += ".";
    std::vector<Emit> stack;
    auto enter = [&](std::size_t v) {
      out += atom_text(g.atoms[v]);
      for (const RingEnd& e : ring_ends[v]) {
        const auto key = std::minmax(v, e.partner);
        if (e.opens) {
          const int l = take_label();
          ring_label[key] = l;
          out += bond_symbol(e.order) + label_text(l);
        } else {
          const int l = ring_label.at(key);
          out += label_text(l);
          free_labels.insert(l);
        }
      }
      stack.push_back({v});
    };
    enter(roots[ri]);
    while (!stack.empty()) {
      Emit& top = stack.back();
      if (top.opened_paren) {
        out += ")";
        top.opened_paren = false;
      }
      const auto& kids = children[top.v];
      if (top.child >= kids.size()) {
        stack.pop_back();
        continue;
      }
      const std::size_t c = kids[top.child++];
      const bool last = top.child == kids.size();
      if (!last) {
        out += "(";
        top.opened_paren = true;
      }
      int ord = 1;
      for (const auto& [w, o] : adj[top.v])
        if (w == c) ord = o;
      out += bond_symbol(ord);
      enter(c);
    }
  }
  return out;
}

Tensor atom_features(const MolecularGraph& g) {
  if (g.atoms.empty()) throw EmptyGraphError("atom_features: graph has no atoms");
  const auto deg = g.degrees();
  std::vector<double> data(g.atoms.size() * kAtomFeatureDim, 0.0);
  for (std::size_t v = 0; v < g.atoms.size(); ++v) {
    const Atom& a = g.atoms[v];
    std::size_t e = kElementCount;
    for (std::size_t k = 0; k < kElementCount; ++k)
      if (a.element == kFeatureElements[k]) e = k;
    if (e == kElementCount) {
      throw UnsupportedAtomError("atom " + std::to_string(v) + " has unsupported element " + a.element);
    }
    double* row = data.data() + v * kAtomFeatureDim;
    row[e] = 1.0;
    row[kElementCount + std::min<std::size_t>(deg[v], 6)] = 1.0;
    row[17] = static_cast<double>(a.charge);
    row[18] = a.ring ? 1.0 : 0.0;
  }
  return Tensor::from_data({g.atoms.size(), kAtomFeatureDim}, std::move(data));
}

std::vector<std::vector<std::uint64_t>> circular_identifiers(const MolecularGraph& g, int max_radius) {
  const std::size_t n = g.atoms.size();
  const auto deg = g.degrees();
  std::vector<std::vector<std::pair<std::size_t, int>>> adj(n);
  for (const Bond& b : g.bonds) {
    adj[b.i].push_back({b.j, b.order});
    adj[b.j].push_back({b.i, b.order});
  }
  std::vector<std::vector<std::uint64_t>> ids;
  std::vector<std::uint64_t> cur(n);
  for (std::size_t v = 0; v < n; ++v) {
    const Atom& a = g.atoms[v];
    std::uint64_t h = combine(0, hash_string(a.element));
    h = combine(h, static_cast<std::uint64_t>(static_cast<std::int64_t>(a.charge)));
    h = combine(h, deg[v]);
    h = combine(h, a.ring ? 1 : 0);
    cur[v] = h;
  }
  ids.push_back(cur);
  for (int r = 1; r <= max_radius; ++r) {
    std::vector<std::uint64_t> next(n);
    for (std::size_t v = 0; v < n; ++v) {
      std::vector<std::pair<int, std::uint64_t>> env;
      for (const auto& [w, o] : adj[v]) env.push_back({o, cur[w]});
      std::sort(env.begin(), env.end());
      std::uint64_t h = combine(static_cast<std::uint64_t>(r), cur[v]);
      for (const auto& [o, id] : env) h = combine(combine(h, static_cast<std::uint64_t>(o)), id);
      next[v] = h;
    }
    cur = std::move(next);
    ids.push_back(cur);
  }
  return ids;
}

std::uint64_t graph_digest(const MolecularGraph& g) {
  std::uint64_t h = combine(g.atoms.size(), g.bonds.size());
  for (auto level : circular_identifiers(g, 3)) {
    std::sort(level.begin(), level.end());
    for (std::uint64_t id : level) h = combine(h, id);
  }
  return h;
}

std::string adjacency_listing(const MolecularGraph& g) {
  std::ostringstream os;
  const auto deg = g.degrees();
  std::vector<std::vector<std::pair<std::size_t, int>>> adj(g.atoms.size());
  for (const Bond& b : g.bonds) {
    adj[b.i].push_back({b.j, b.order});
    adj[b.j].push_back({b.i, b.order});
  }
  os << "atoms " << g.atoms.size() << "\n";
  for (std::size_t v = 0; v < g.atoms.size(); ++v) {
    const Atom& a = g.atoms[v];
    os << v << " " << a.element << " charge=" << a.charge << " ring=" << (a.ring ? 1 : 0) << " degree=" << deg[v]
       << " ->";
    for (const auto& [w, o] : adj[v]) os << " " << w << ":" << o;
    os << "\n";
  }
  os << "bonds " << g.bonds.size() << "\n";
  return os.str();
}

}  // namespace mora
