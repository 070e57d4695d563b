#include "kpi/kg_fusion.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

namespace kpi::fusion {

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double na = a.norm(), nb = b.norm();
  if (na < 1e-12 || nb < 1e-12) {
    throw InvalidInput("cluster_by_similarity: zero-norm embedding");
  }
  return a.dot(b) / (na * nb);
}

std::vector<std::vector<int>> groups_of(UnionFind& uf, int n) {
  std::map<int, std::vector<int>> by_root;
  for (int i = 0; i < n; ++i) by_root[uf.find(i)].push_back(i);
  std::vector<std::vector<int>> clusters;
  for (auto& [root, members] : by_root) {
    std::sort(members.begin(), members.end());
    clusters.push_back(std::move(members));
  }
  std::sort(clusters.begin(), clusters.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return clusters;
}

}  // namespace

std::vector<Eigen::VectorXd> embed_items(const text::Encoder& encoder,
                                         const std::vector<std::string>& surface_texts) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(surface_texts.size());
  for (const auto& s : surface_texts) out.push_back(encoder.encode_text(s));
  return out;
}

std::vector<std::vector<int>> cluster_by_similarity(
    const std::vector<Eigen::VectorXd>& embeddings, double delta) {
  if (delta <= 0.0 || delta > 1.0) {
    throw InvalidInput("cluster_by_similarity: delta must be in (0, 1]");
  }
  int n = static_cast<int>(embeddings.size());
  UnionFind uf(n);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (cosine(embeddings[i], embeddings[j]) > delta) uf.unite(i, j);
    }
  }
  return groups_of(uf, n);
}

std::string elect_canonical(const std::vector<std::string>& members,
                            const std::vector<long>& counts) {
  if (members.empty() || members.size() != counts.size()) {
    throw InvalidInput("elect_canonical: bad member/count lists");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < members.size(); ++i) {
    if (counts[i] > counts[best] ||
        (counts[i] == counts[best] && members[i] < members[best])) {
      best = i;
    }
  }
  return members[best];
}

namespace {

struct SurfaceTable {
  std::vector<std::string> surfaces;  // sorted, distinct
  std::vector<long> counts;           // corpus occurrence counts
  std::map<std::string, long> counts_by_surface;

  void add(const std::string& s, long count) { counts_by_surface[s] += count; }
  void finalize() {
    for (auto& [s, c] : counts_by_surface) {
      surfaces.push_back(s);
      counts.push_back(c);
    }
  }
};

}  // namespace

UnifiedGraph fuse(const std::vector<kg::KnowledgeTriplet>& corpus,
                  const std::vector<kg::RelationDefinition>& definitions,
                  double delta, const text::Encoder& encoder,
                  const std::vector<std::string>& disease_labels,
                  const std::string& corpus_hash) {
  if (corpus.empty()) throw InvalidInput("fuse: empty triplet corpus");

  std::map<std::string, std::string> def_by_relation;
  for (const auto& d : definitions) def_by_relation[d.relation] = d.definition;

  // entity surfaces with occurrence counts; disease labels always present
  SurfaceTable entities;
  for (const auto& t : corpus) {
    entities.add(t.head, 1);
    entities.add(t.tail, 1);
  }
  for (const auto& label : disease_labels) entities.add(label, 0);
  entities.finalize();

  SurfaceTable relations;
  for (const auto& t : corpus) relations.add(t.relation, 1);
  relations.finalize();
  for (const auto& s : relations.surfaces) {
    if (!def_by_relation.count(s)) {
      throw InvalidInput("fuse: relation without definition: " + s);
    }
  }

  std::set<std::string> disease_set(disease_labels.begin(), disease_labels.end());

  // entity clustering; a union that would merge two distinct disease
  // labels is skipped so each label keeps its own node
  auto entity_embs = embed_items(encoder, entities.surfaces);
  int n = static_cast<int>(entity_embs.size());
  UnionFind uf(n);
  std::vector<std::string> root_disease(n);
  for (int i = 0; i < n; ++i) {
    if (disease_set.count(entities.surfaces[i])) root_disease[i] = entities.surfaces[i];
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (cosine(entity_embs[i], entity_embs[j]) <= delta) continue;
      int ri = uf.find(i), rj = uf.find(j);
      if (ri == rj) continue;
      const std::string& di = root_disease[ri];
      const std::string& dj = root_disease[rj];
      if (!di.empty() && !dj.empty() && di != dj) continue;
      uf.unite(ri, rj);
      int r = uf.find(ri);
      root_disease[r] = !di.empty() ? di : dj;
    }
  }
  auto entity_clusters = groups_of(uf, n);

  // relation clustering over "surface: definition" fusion text
  std::vector<std::string> rel_fusion_texts;
  for (const auto& s : relations.surfaces) {
    rel_fusion_texts.push_back(s + ": " + def_by_relation.at(s));
  }
  auto rel_embs = embed_items(encoder, rel_fusion_texts);
  auto rel_clusters = cluster_by_similarity(rel_embs, delta);

  UnifiedGraph g;
  g.dim = encoder.dim();
  g.delta = delta;
  g.corpus_hash = corpus_hash;

  struct PendingNode {
    std::string canonical;
    std::vector<std::string> members;
    Eigen::VectorXd embedding;
    bool is_disease = false;
  };
  auto build_cluster = [](const std::vector<int>& cluster, const SurfaceTable& table,
                          const std::vector<Eigen::VectorXd>& embs) {
    PendingNode p;
    std::vector<long> counts;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(embs[cluster[0]].size());
    for (int idx : cluster) {
      p.members.push_back(table.surfaces[idx]);
      counts.push_back(table.counts[idx]);
      acc += embs[idx];
    }
    p.embedding = acc / static_cast<double>(cluster.size());
    p.canonical = elect_canonical(p.members, counts);
    return p;
  };

  std::vector<PendingNode> pending_nodes;
  for (const auto& cluster : entity_clusters) {
    PendingNode p = build_cluster(cluster, entities, entity_embs);
    for (const auto& m : p.members) {
      if (disease_set.count(m)) {
        p.is_disease = true;
        p.canonical = m;  // disease label overrides frequency election
      }
    }
    pending_nodes.push_back(std::move(p));
  }
  std::sort(pending_nodes.begin(), pending_nodes.end(),
            [](const PendingNode& a, const PendingNode& b) {
              return a.canonical < b.canonical;
            });
  std::map<std::string, int> entity_cluster_of;
  for (std::size_t i = 0; i < pending_nodes.size(); ++i) {
    FusedNode node;
    node.id = static_cast<int>(i);
    node.canonical_label = pending_nodes[i].canonical;
    node.members = pending_nodes[i].members;
    node.embedding = pending_nodes[i].embedding;
    node.is_disease = pending_nodes[i].is_disease;
    for (const auto& m : node.members) entity_cluster_of[m] = node.id;
    g.nodes.push_back(std::move(node));
  }

  std::vector<PendingNode> pending_rels;
  for (const auto& cluster : rel_clusters) {
    pending_rels.push_back(build_cluster(cluster, relations, rel_embs));
  }
  std::sort(pending_rels.begin(), pending_rels.end(),
            [](const PendingNode& a, const PendingNode& b) {
              return a.canonical < b.canonical;
            });
  std::map<std::string, int> relation_cluster_of;
  for (std::size_t i = 0; i < pending_rels.size(); ++i) {
    FusedRelation rel;
    rel.id = static_cast<int>(i);
    rel.canonical_label = pending_rels[i].canonical;
    rel.members = pending_rels[i].members;
    rel.embedding = pending_rels[i].embedding;
    rel.definition = def_by_relation.at(rel.canonical_label);
    for (const auto& m : rel.members) relation_cluster_of[m] = rel.id;
    g.relations.push_back(std::move(rel));
  }

  std::set<Edge> edge_set;
  for (const auto& t : corpus) {
    edge_set.insert(Edge{entity_cluster_of.at(t.head), relation_cluster_of.at(t.relation),
                         entity_cluster_of.at(t.tail)});
  }
  g.edges.assign(edge_set.begin(), edge_set.end());
  return g;
}

std::optional<int> UnifiedGraph::node_by_label(const std::string& canonical) const {
  for (const auto& n : nodes) {
    if (n.canonical_label == canonical) return n.id;
  }
  return std::nullopt;
}

std::optional<int> UnifiedGraph::disease_node(const std::string& label) const {
  auto id = node_by_label(label);
  if (id && nodes[static_cast<std::size_t>(*id)].is_disease) return id;
  return std::nullopt;
}

std::vector<int> UnifiedGraph::disease_node_ids() const {
  std::vector<int> ids;
  for (const auto& n : nodes) {
    if (n.is_disease) ids.push_back(n.id);
  }
  // nodes are stored in canonical label order already
  return ids;
}

std::vector<std::vector<int>> UnifiedGraph::adjacency() const {
  std::vector<std::set<int>> adj(nodes.size());
  for (const auto& e : edges) {
    if (e.head == e.tail) continue;
    adj[static_cast<std::size_t>(e.head)].insert(e.tail);
    adj[static_cast<std::size_t>(e.tail)].insert(e.head);
  }
  std::vector<std::vector<int>> out(nodes.size());
  for (std::size_t i = 0; i < adj.size(); ++i) out[i].assign(adj[i].begin(), adj[i].end());
  return out;
}

namespace {

constexpr char kMagic[8] = {'K', 'P', 'I', 'G', 'R', 'P', 'H', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_f64(std::ostream& out, double v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void write_str(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
void write_vec(std::ostream& out, const Eigen::VectorXd& v) {
  write_u64(out, static_cast<std::uint64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(v.size())));
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw IoError("graph file truncated");
  return v;
}
double read_f64(std::istream& in) {
  double v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw IoError("graph file truncated");
  return v;
}
std::string read_str(std::istream& in) {
  std::uint64_t len = read_u64(in);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("graph file truncated");
  return s;
}
Eigen::VectorXd read_vec(std::istream& in) {
  std::uint64_t len = read_u64(in);
  Eigen::VectorXd v(static_cast<long>(len));
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(sizeof(double) * len));
  if (!in) throw IoError("graph file truncated");
  return v;
}

}  // namespace

void UnifiedGraph::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write graph file: " + path);
  save_stream(out);
  if (!out) throw IoError("failed writing graph file: " + path);
}

void UnifiedGraph::save_stream(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, static_cast<std::uint64_t>(dim));
  write_f64(out, delta);
  write_str(out, corpus_hash);
  write_u64(out, nodes.size());
  for (const auto& n : nodes) {
    write_str(out, n.canonical_label);
    write_u64(out, n.members.size());
    for (const auto& m : n.members) write_str(out, m);
    out.put(n.is_disease ? 1 : 0);
    write_vec(out, n.embedding);
  }
  write_u64(out, relations.size());
  for (const auto& r : relations) {
    write_str(out, r.canonical_label);
    write_u64(out, r.members.size());
    for (const auto& m : r.members) write_str(out, m);
    write_str(out, r.definition);
    write_vec(out, r.embedding);
  }
  write_u64(out, edges.size());
  for (const auto& e : edges) {
    write_u64(out, static_cast<std::uint64_t>(e.head));
    write_u64(out, static_cast<std::uint64_t>(e.relation));
    write_u64(out, static_cast<std::uint64_t>(e.tail));
  }
}

UnifiedGraph UnifiedGraph::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open graph file: " + path);
  return load_stream(in);
}

UnifiedGraph UnifiedGraph::load_stream(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a graph file");
  }
  UnifiedGraph g;
  g.dim = static_cast<int>(read_u64(in));
  g.delta = read_f64(in);
  g.corpus_hash = read_str(in);
  std::uint64_t n_nodes = read_u64(in);
  for (std::uint64_t i = 0; i < n_nodes; ++i) {
    FusedNode n;
    n.id = static_cast<int>(i);
    n.canonical_label = read_str(in);
    std::uint64_t n_members = read_u64(in);
    for (std::uint64_t m = 0; m < n_members; ++m) n.members.push_back(read_str(in));
    n.is_disease = in.get() == 1;
    n.embedding = read_vec(in);
    g.nodes.push_back(std::move(n));
  }
  std::uint64_t n_rels = read_u64(in);
  for (std::uint64_t i = 0; i < n_rels; ++i) {
    FusedRelation r;
    r.id = static_cast<int>(i);
    r.canonical_label = read_str(in);
    std::uint64_t n_members = read_u64(in);
    for (std::uint64_t m = 0; m < n_members; ++m) r.members.push_back(read_str(in));
    r.definition = read_str(in);
    r.embedding = read_vec(in);
    g.relations.push_back(std::move(r));
  }
  std::uint64_t n_edges = read_u64(in);
  for (std::uint64_t i = 0; i < n_edges; ++i) {
    Edge e;
    e.head = static_cast<int>(read_u64(in));
    e.relation = static_cast<int>(read_u64(in));
    e.tail = static_cast<int>(read_u64(in));
    g.edges.push_back(e);
  }
  return g;
}

}  // namespace kpi::fusion
