#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "tandem/feops.hpp"
#include "tandem/tabular.hpp"

namespace tandem {

// Steering mode for the next proposal. Initialization applies only at the
// root state; Exploitation is the only mode that gets the memory section.
enum class Directive { Initialization, Exploration, Exploitation };

std::string to_string(Directive directive);

// One already-taken step on the path from the root to the current state.
struct AncestorStep {
    std::string reason;
    std::string way;
    double score = 0.0;
};

// One high-performing historical operation surfaced to Exploitation prompts.
struct MemoryNote {
    std::string reason;
    std::string way;
    double score = 0.0;
    double gain = 0.0;
};

// Everything prompt assembly needs. Rendering is a pure function of this
// struct, so identical contexts produce identical prompts.
struct ProposerContext {
    TaskKind task = TaskKind::Regression;
    std::string target;
    std::string learner;
    std::size_t n_rows = 0;
    SchemaView schema;
    std::vector<ColumnSummary> summaries;
    std::map<std::string, std::string> notes;
    std::vector<AncestorStep> ancestors;  // front() is the root "do nothing"
    std::vector<MemoryNote> memory;
    Directive directive = Directive::Initialization;
};

// A parsed reply: free-text rationale, the columns the step needs, and the
// operations forming one FE step.
struct Proposal {
    std::string reason;
    std::string way;
    std::vector<std::string> required_features;
    std::vector<OperationSpec> ops;
};

struct ParseResult {
    std::optional<Proposal> proposal;
    std::vector<std::string> violations;
};

std::string build_prompt(const ProposerContext& ctx);

// Sampling temperature for a directive: broad modes run hotter than
// refinement.
double directive_temperature(Directive directive);

// Extracts a Proposal from raw reply text. Problems come back as violations,
// never as exceptions, so the caller can retry with feedback.
ParseResult parse_proposal(const std::string& reply);

// Checks a parsed proposal against the current schema: the operations must
// validate as a sequential step and required_features must cover every
// operation input, intermediate columns included.
std::vector<std::string> validate_proposal(const Proposal& proposal,
                                           const ProposerContext& ctx);

// Renders a proposal to the reply wire format that parse_proposal consumes.
std::string render_reply(const Proposal& proposal);

class ProposerBackend {
  public:
    virtual ~ProposerBackend() = default;
    virtual std::string complete(const std::string& prompt, double temperature) = 0;
    virtual std::string name() const = 0;
};

// Replays a fixed list of proposals as wire-format replies, cycling when the
// list is exhausted. Ignores the prompt, which makes runs reproducible.
class ScriptedBackend : public ProposerBackend {
  public:
    explicit ScriptedBackend(std::vector<Proposal> entries);
    std::string complete(const std::string& prompt, double temperature) override;
    std::string name() const override;
    std::size_t served() const;

  private:
    std::vector<Proposal> entries_;
    std::size_t served_ = 0;
};

struct LlmSettings {
    std::string base_url;
    std::string path = "/v1/chat/completions";
    std::string api_key;
    std::string model;
    int timeout_seconds = 60;
};

// Chat-completions HTTP backend. Transport and protocol problems surface as
// ProposerError; propose() treats those like any other failed attempt.
class LlmBackend : public ProposerBackend {
  public:
    explicit LlmBackend(LlmSettings settings);
    std::string complete(const std::string& prompt, double temperature) override;
    std::string name() const override;

  private:
    LlmSettings settings_;
};

struct ProposeResult {
    Proposal proposal;
    int attempts = 1;
    bool fallback = false;
};

// One completion plus up to three retries, each with the previous attempt's
// violations appended to the prompt. When every attempt fails the result is
// fallback_proposal, flagged so the caller can log it.
ProposeResult propose(const ProposerContext& ctx, ProposerBackend& backend,
                      std::mt19937_64& rng);

// Minimal always-valid step on one uniformly chosen feature column: mean
// imputation for numeric, frequency encoding for categorical. Throws
// ProposerError when the schema has no feature columns at all.
Proposal fallback_proposal(const ProposerContext& ctx, std::mt19937_64& rng);

}  // namespace tandem
