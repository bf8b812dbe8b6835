#pragma once

// Correctness judging: autoregressive decoding or teacher-forcing parallel
// verification. A teacher-forcing pass checks that every answer position's
// argmax equals the next gold token (EOS included, so a Correct is sound);
// on a mismatch the predicted token either definitively contradicts the gold
// answer (digit vs digit) or is mere formatting, in which case a full
// autoregressive decode resolves it.

#include <optional>
#include <string>
#include <vector>

#include "zeh/families.hpp"
#include "zeh/model.hpp"
#include "zeh/toy_model.hpp"

namespace zeh {

enum class Outcome {
    Correct,
    Wrong,
    AmbiguousResolvedCorrect,
    AmbiguousResolvedWrong,
    AdapterError,
};

const char* outcome_tag(Outcome o);
std::optional<Outcome> outcome_from_tag(const std::string& tag);
bool outcome_is_correct(Outcome o);
bool outcome_is_wrong(Outcome o);

struct Divergence {
    int position = 0;  // token index in the verified sequence
    std::string gold_token;
    std::string pred_token;
};

struct Verdict {
    Outcome outcome = Outcome::Correct;
    std::string predicted;
    std::optional<Divergence> first_divergence;
    std::string pipeline;
};

// Canonicalizes a raw model answer: trims whitespace, strips trailing
// periods, removes ',' and ' ' inside digit runs ("1,204" == "1204"),
// case-folds letters. Idempotent.
std::string normalize_answer(const std::string& raw);

// Normalized equality; numeric families additionally accept value equality
// (leading zeros tolerated: "056" == "56").
bool answers_equal(FamilyId family, const GoldAnswer& gold, const std::string& predicted_raw);

enum class MismatchKind { Definitive, Ambiguous };

// Definitive iff both symbols are single answer-alphabet characters of the
// family (digits for numeric families, Y/N for parens) and differ. Throws
// std::invalid_argument when the symbols are equal (not a mismatch).
MismatchKind classify_mismatch(FamilyId family, const std::string& gold_sym,
                               const std::string& pred_sym);

// Tokenized prompt/gold context for one (template, instance) pair.
struct InstanceText {
    std::string instructions;
    std::string input;
    GoldAnswer gold;
    std::vector<int> prompt_tokens;  // BOS + instructions + " " + input
    std::vector<int> gold_tokens;    // gold text + EOS
};

InstanceText prepare_instance(const PromptTemplate& tmpl, const Instance& inst);

// Greedy decode to EOS (max_new = gold length + 16), normalize, compare.
Verdict verify_autoregressive(const ToyModel& model, const Instance& inst,
                              const PromptTemplate& tmpl);
Verdict verify_autoregressive(TextModel& model, const Instance& inst, const PromptTemplate& tmpl,
                              std::int64_t request_id = 0);

// Outcome of the teacher-forcing argmax screen alone: either every answer
// position matched, or the first mismatch is definitive (answer symbols
// disagree) or ambiguous (formatting token; needs an autoregressive decode).
struct TfScreenResult {
    enum class Kind { AllPass, Definitive, Ambiguous };
    Kind kind = Kind::AllPass;
    Divergence divergence;  // meaningful unless AllPass
};

// One causal forward over prompt+gold with per-position argmax checks.
TfScreenResult teacher_forced_screen(const ToyModel& model, const Instance& inst,
                                     const PromptTemplate& tmpl);

// Screen plus the fallback discipline. A definitive Wrong also runs one
// decode so the record carries the model's actual answer.
Verdict verify_teacher_forced(const ToyModel& model, const Instance& inst,
                              const PromptTemplate& tmpl);

namespace detail {
// Shared by verify_teacher_forced and the trie verdict collector. The check
// at sequence position `pos` expects token `expected`; `first_answer_pos` is
// the position of the first gold token.
MismatchKind tf_mismatch_kind(FamilyId family, int expected_token, int predicted_token,
                              int pos, int first_answer_pos);
}  // namespace detail

}  // namespace zeh
