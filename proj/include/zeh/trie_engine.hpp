#pragma once

// Cross-instance computation sharing: prompt prefix caching plus trie-batched
// teacher-forcing verification through dense-masked reference tree attention
// or the FlashTree blocked kernel.

#include <vector>

#include "zeh/toy_model.hpp"
#include "zeh/trie.hpp"
#include "zeh/verifier.hpp"

namespace zeh {

// Evaluates the common prompt portion once; the handle is shared read-only
// across all downstream forward passes.
KvCache prefill_prompt(const ToyModel& model, const std::vector<int>& prompt);

// Reference semantics: node v attends exactly to its ancestor-or-self set
// (plus the prefix); one logits row per real node. Serial; refuses tries
// above dense_cap nodes.
std::vector<float> tree_attention_dense(const ToyModel& model, const Trie& trie,
                                        const KvCache* prefix = nullptr, int dense_cap = 4096);

// Same contract, blocked evaluation with on-the-fly ancestor tests and
// online softmax; OpenMP-parallel over queries.
std::vector<float> tree_attention_flash(const ToyModel& model, const Trie& trie, int block_size,
                                        const KvCache* prefix = nullptr);

// Per-sequence teacher-forcing screening over trie logits, with the same
// classification rules as the single-sequence screen. Fallback (and the
// answer decode for a definitive Wrong) is the caller's job since it needs
// the instances.
std::vector<TfScreenResult> collect_tf_verdicts(const std::vector<float>& node_logits,
                                                const Trie& trie, FamilyId family, int vocab);

// TF sequences for a wave of instances, relative to a run-level prefix that
// holds BOS + instructions + " " (prefilled separately): tokens are
// input + gold + EOS with answer_start = |input|.
std::vector<TrieSequence> make_tf_sequences(const std::vector<InstanceText>& texts);

}  // namespace zeh
