#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "seqseg/rng.hpp"

namespace seqseg {

// K contiguous, disjoint index ranges covering {0..M-1} in order.
struct ChunkRange {
  int begin = 0;
  int size = 0;
};

struct ChunkPartition {
  int M = 0;
  std::vector<ChunkRange> ranges;
};

// Balanced contiguous partition: the first (M mod K) chunks get ceil(M/K)
// indices, the rest floor(M/K).
ChunkPartition partition(int M, int K);

// One uniform draw per chunk, returned in chunk order.
std::vector<int> sample_per_chunk(const ChunkPartition& part, Rng& rng);

enum class AblationMode { kRandomK, kFirstK };

AblationMode ablation_mode_from_string(const std::string& s);

// random_k: K indices without replacement, ascending; first_k: the prefix.
std::vector<int> select_ablation_indices(int seq_len, int K, AblationMode mode, Rng& rng);

template <typename T>
std::vector<T> select_inference(const std::vector<T>& seq, int m_out) {
  if (m_out < 1 || m_out > static_cast<int>(seq.size())) {
    throw std::invalid_argument("select_inference: need 1 <= M_out <= |seq|, got " +
                                std::to_string(m_out) + " for length " +
                                std::to_string(seq.size()));
  }
  return std::vector<T>(seq.begin(), seq.begin() + m_out);
}

template <typename T>
std::vector<T> select_ablation(const std::vector<T>& seq, int K, AblationMode mode, Rng& rng) {
  auto idx = select_ablation_indices(static_cast<int>(seq.size()), K, mode, rng);
  std::vector<T> out;
  out.reserve(idx.size());
  for (int i : idx) out.push_back(seq[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace seqseg
