#include "zeh/trie_engine.hpp"

#include "zeh/tokenizer.hpp"

namespace zeh {

KvCache prefill_prompt(const ToyModel& model, const std::vector<int>& prompt) {
    return model.prefill(prompt);
}

std::vector<float> tree_attention_dense(const ToyModel& model, const Trie& trie,
                                        const KvCache* prefix, int dense_cap) {
    return model.forward_trie(trie, prefix, ToyModel::TreeKernel::Dense, /*block_size=*/64,
                              dense_cap);
}

std::vector<float> tree_attention_flash(const ToyModel& model, const Trie& trie, int block_size,
                                        const KvCache* prefix) {
    return model.forward_trie(trie, prefix, ToyModel::TreeKernel::Flash, block_size);
}

std::vector<TfScreenResult> collect_tf_verdicts(const std::vector<float>& node_logits,
                                                const Trie& trie, FamilyId family, int vocab) {
    std::vector<TfScreenResult> out(trie.seq_checks.size());
    for (std::size_t s = 0; s < trie.seq_checks.size(); ++s) {
        const auto& checks = trie.seq_checks[s];
        TfScreenResult result;
        const int first_answer = checks.empty() ? 0 : checks.front().seq_pos;
        for (const auto& c : checks) {
            // Node row r corresponds to real node r+1.
            const float* row = node_logits.data() + static_cast<std::size_t>(c.node - 1) * vocab;
            int pred = ToyModel::argmax_row(row, vocab);
            if (pred == c.expected) continue;
            result.divergence = {c.seq_pos, Tokenizer::token_text(c.expected),
                                 Tokenizer::token_text(pred)};
            result.kind = detail::tf_mismatch_kind(family, c.expected, pred, c.seq_pos,
                                                   first_answer) == MismatchKind::Definitive
                              ? TfScreenResult::Kind::Definitive
                              : TfScreenResult::Kind::Ambiguous;
            break;
        }
        out[s] = std::move(result);
    }
    return out;
}

std::vector<TrieSequence> make_tf_sequences(const std::vector<InstanceText>& texts) {
    std::vector<TrieSequence> seqs;
    seqs.reserve(texts.size());
    for (const auto& t : texts) {
        TrieSequence seq;
        seq.tokens = Tokenizer::encode(t.input);
        seq.answer_start = static_cast<int>(seq.tokens.size());
        seq.tokens.insert(seq.tokens.end(), t.gold_tokens.begin(), t.gold_tokens.end());
        seqs.push_back(std::move(seq));
    }
    return seqs;
}

}  // namespace zeh
