#include "seqseg/sequence_control.hpp"

#include <algorithm>

namespace seqseg {

ChunkPartition partition(int M, int K) {
  if (K < 1 || M < K) {
    throw std::invalid_argument("partition: need M >= K >= 1, got M=" + std::to_string(M) +
                                " K=" + std::to_string(K));
  }
  ChunkPartition part;
  part.M = M;
  part.ranges.reserve(static_cast<std::size_t>(K));
  const int base = M / K;
  const int extra = M % K;  // first `extra` chunks take one more
  int begin = 0;
  for (int k = 0; k < K; ++k) {
    int size = base + (k < extra ? 1 : 0);
    part.ranges.push_back({begin, size});
    begin += size;
  }
  return part;
}

std::vector<int> sample_per_chunk(const ChunkPartition& part, Rng& rng) {
  std::vector<int> out;
  out.reserve(part.ranges.size());
  for (const auto& r : part.ranges) {
    out.push_back(r.begin + rng.uniform_int(0, r.size - 1));
  }
  return out;
}

AblationMode ablation_mode_from_string(const std::string& s) {
  if (s == "random_k") return AblationMode::kRandomK;
  if (s == "first_k") return AblationMode::kFirstK;
  throw std::invalid_argument("unknown ablation mode: " + s);
}

std::vector<int> select_ablation_indices(int seq_len, int K, AblationMode mode, Rng& rng) {
  if (K < 1 || K > seq_len) {
    throw std::invalid_argument("select_ablation: need 1 <= K <= |seq|, got K=" +
                                std::to_string(K) + " for length " + std::to_string(seq_len));
  }
  std::vector<int> idx;
  idx.reserve(static_cast<std::size_t>(K));
  if (mode == AblationMode::kFirstK) {
    for (int i = 0; i < K; ++i) idx.push_back(i);
    return idx;
  }
  // Partial Fisher-Yates, then ascending so the loss sees a stable ordering.
  std::vector<int> pool(static_cast<std::size_t>(seq_len));
  for (int i = 0; i < seq_len; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < K; ++i) {
    int j = rng.uniform_int(i, seq_len - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  idx.assign(pool.begin(), pool.begin() + K);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace seqseg
