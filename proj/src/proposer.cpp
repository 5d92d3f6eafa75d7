#include "tandem/proposer.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>
#include <utility>

#include "httplib.h"
#include "json.hpp"

namespace tandem {

namespace {

using nlohmann::json;

std::string fmt(double value) {
    char buffer[48];
    std::snprintf(buffer, sizeof(buffer), "%.6g", value);
    return buffer;
}

std::string fmt_pct(double ratio) {
    char buffer[48];
    std::snprintf(buffer, sizeof(buffer), "%.2f%%", ratio * 100.0);
    return buffer;
}

std::string trim(const std::string& text) {
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) {
        ++begin;
    }
    while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) {
        --end;
    }
    return text.substr(begin, end - begin);
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string current;
    for (char c : text) {
        if (c == '\n') {
            if (!current.empty() && current.back() == '\r') {
                current.pop_back();
            }
            lines.push_back(current);
            current.clear();
        } else {
            current += c;
        }
    }
    lines.push_back(current);
    return lines;
}

// True when `line` opens the named reply section, with or without the "---"
// marker prefix.
bool section_marker(const std::string& line, const std::string& name, std::string* rest) {
    std::string body = trim(line);
    if (body.rfind("---", 0) == 0) {
        body = trim(body.substr(3));
    }
    if (body.rfind(name, 0) != 0) {
        return false;
    }
    if (rest != nullptr) {
        *rest = trim(body.substr(name.size()));
    }
    return true;
}

std::string join_nonempty(const std::vector<std::string>& lines) {
    std::string out;
    for (const std::string& line : lines) {
        if (!out.empty()) {
            out += '\n';
        }
        out += line;
    }
    return trim(out);
}

// Parses the bracketed list on a "required_feature_columns = [...]" line.
// Accepts single or double quotes. Returns false on malformed input.
bool parse_column_list(const std::string& line, std::vector<std::string>* out) {
    const std::size_t open = line.find('[');
    if (open == std::string::npos) {
        return false;
    }
    std::vector<std::string> names;
    bool closed = false;
    std::size_t i = open + 1;
    while (i < line.size()) {
        const char c = line[i];
        if (c == ']') {
            closed = true;
            break;
        }
        if (c == '\'' || c == '"') {
            const std::size_t end = line.find(c, i + 1);
            if (end == std::string::npos) {
                return false;
            }
            names.push_back(line.substr(i + 1, end - i - 1));
            i = end + 1;
        } else {
            ++i;
        }
    }
    if (!closed) {
        return false;
    }
    *out = std::move(names);
    return true;
}

const char* directive_instruction(Directive directive) {
    switch (directive) {
        case Directive::Initialization:
            return "craft one strong opening step for the untouched dataset; "
                   "favor robust, widely useful transformations over narrow "
                   "tricks, so later steps have a solid base to build on.";
        case Directive::Exploration:
            return "try a part of the transformation space this search has "
                   "not visited; pick something clearly different from every "
                   "step in the ancestor pipeline, accepting more risk for "
                   "the chance of a large gain.";
        case Directive::Exploitation:
            return "build on what already worked; adapt or combine the "
                   "memory entries above into a small, focused refinement "
                   "rather than a brand-new idea.";
    }
    return "";
}

}  // namespace

std::string to_string(Directive directive) {
    switch (directive) {
        case Directive::Initialization:
            return "initialization";
        case Directive::Exploration:
            return "exploration";
        case Directive::Exploitation:
            return "exploitation";
    }
    throw SpecError("unknown directive");
}

double directive_temperature(Directive directive) {
    return directive == Directive::Exploitation ? 0.3 : 0.7;
}

std::string build_prompt(const ProposerContext& ctx) {
    std::string out;
    out +=
        "You are an expert feature engineering assistant for tabular machine "
        "learning.\n"
        "Given the dataset profile, the transformation history, and (when "
        "present) a\n"
        "memory of high-performing operations, propose exactly one new "
        "feature\n"
        "engineering step that maximizes the validation score of the "
        "downstream\n"
        "learner '" + ctx.learner + "'. Higher scores are better.\n\n";
    out +=
        "Reply in exactly this format:\n"
        "--- Reason: why the transformation should help the learner.\n"
        "--- Way:\n"
        "required_feature_columns = [\"col_a\", \"col_b\"]\n"
        "a short description of the method.\n"
        "--- Implementation:\n"
        "```json\n"
        "[{\"kind\": \"<operation>\", \"params\": {}, \"inputs\": "
        "[\"col_a\"], \"outputs\": []}]\n"
        "```\n\n";
    out += "Available operation kinds: ";
    const auto kinds = all_op_kinds();
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        out += (i == 0 ? "" : ", ") + to_string(kinds[i]);
    }
    out += ".\n\n";

    std::size_t numeric_features = 0;
    std::size_t categorical_features = 0;
    for (const auto& entry : ctx.schema.columns) {
        if (entry.first == ctx.target) {
            continue;
        }
        (entry.second == ColumnKind::Numeric ? numeric_features : categorical_features) += 1;
    }
    const std::size_t feature_count = numeric_features + categorical_features;

    std::vector<const ColumnSummary*> features;
    std::size_t high_missing = 0;
    for (const ColumnSummary& summary : ctx.summaries) {
        if (summary.name == ctx.target) {
            continue;
        }
        features.push_back(&summary);
        if (summary.missing_ratio > 0.3) {
            ++high_missing;
        }
    }
    // Context is finite: surface the most informative columns first. Missing
    // data, a human description, and categorical structure all make a column
    // worth showing in detail.
    auto informativeness = [&ctx](const ColumnSummary& s) {
        return (ctx.notes.count(s.name) != 0 ? 2.0 : 0.0) + s.missing_ratio +
               (s.kind == ColumnKind::Categorical ? 0.5 : 0.0);
    };
    std::sort(features.begin(), features.end(),
              [&](const ColumnSummary* a, const ColumnSummary* b) {
                  const double ia = informativeness(*a);
                  const double ib = informativeness(*b);
                  if (ia != ib) {
                      return ia > ib;
                  }
                  return a->name < b->name;
              });
    const std::size_t shown = std::min<std::size_t>(features.size(), 15);

    out += "[Dataset Profile]\n";
    out += "samples=" + std::to_string(ctx.n_rows) + ", features=" +
           std::to_string(feature_count) + ", numeric=" + std::to_string(numeric_features) +
           ", categorical=" + std::to_string(categorical_features) + ", task=" +
           to_string(ctx.task) + "\n";
    out += "Target: " + ctx.target;
    const auto target_note = ctx.notes.find(ctx.target);
    if (target_note != ctx.notes.end()) {
        out += " (" + target_note->second + ")";
    }
    out += "\nAll columns: [";
    bool first = true;
    for (const auto& entry : ctx.schema.columns) {
        if (entry.first == ctx.target) {
            continue;
        }
        out += (first ? "" : ", ") + entry.first;
        first = false;
    }
    out += "]\n\n";

    out += "[Feature Summary]\n";
    out += "high-missing(>0.3): " + std::to_string(high_missing) + " / " +
           std::to_string(features.size()) + "\n\n";

    out += "[Key Features] (top " + std::to_string(shown) + " of " +
           std::to_string(features.size()) + ")\n";
    for (std::size_t i = 0; i < shown; ++i) {
        const ColumnSummary& s = *features[i];
        out += "- " + s.name + ": type=" + to_string(s.kind) +
               ", missing=" + fmt_pct(s.missing_ratio);
        if (s.kind == ColumnKind::Numeric) {
            out += ", mean=" + fmt(s.mean) + ", std=" + fmt(s.stddev) + ", range=(" +
                   fmt(s.min) + ", " + fmt(s.max) + ")";
        } else {
            out += ", classes=" + std::to_string(s.cardinality) + ", top=[";
            for (std::size_t t = 0; t < s.top.size(); ++t) {
                out += (t == 0 ? "" : ", ") + ("(" + s.top[t].first + ", " +
                                               std::to_string(s.top[t].second) + ")");
            }
            out += "]";
        }
        const auto note = ctx.notes.find(s.name);
        if (note != ctx.notes.end()) {
            out += ", note=" + note->second;
        }
        out += "\n";
    }
    out += "\n";

    out += "[Ancestor Pipeline]\n";
    out += "Steps taken from the raw dataset to the current state:\n";
    for (std::size_t i = 0; i < ctx.ancestors.size(); ++i) {
        const AncestorStep& step = ctx.ancestors[i];
        if (i == 0) {
            out += "-> [Do nothing]\n   Score: " + fmt(step.score) + "\n";
            continue;
        }
        out += "-> [Step " + std::to_string(i) + "]\n";
        out += "   Reason: " + step.reason + "\n";
        out += "   Way: " + step.way + "\n";
        out += "   Score: " + fmt(step.score) + "\n";
    }
    out += "\n";

    if (ctx.directive == Directive::Exploitation) {
        out += "[Memory]\n";
        out += "High-performing historical operations:\n";
        if (ctx.memory.empty()) {
            out += "none recorded yet.\n";
        }
        for (std::size_t i = 0; i < ctx.memory.size(); ++i) {
            const MemoryNote& note = ctx.memory[i];
            out += "[Good Operation " + std::to_string(i + 1) + "]\n";
            out += "   Reason: " + note.reason + "\n";
            out += "   Way: " + note.way + "\n";
            out += "   Score: " + fmt(note.score) + ", relative improve: " + fmt(note.gain) +
                   "\n";
        }
        out += "\n";
    }

    out += "[Directive]\n";
    out +=
        "Your objectives:\n"
        "1. Review the ancestor pipeline above before deciding.\n"
        "2. Do not repeat an operation that pipeline already contains.\n"
        "3. Propose exactly one new step; generators, selectors, "
        "transformations,\n"
        "   rescalers, and imputers are all fair game.\n";
    out += "Your strategy is " + to_string(ctx.directive) + ": " +
           directive_instruction(ctx.directive) + "\n";
    return out;
}

ParseResult parse_proposal(const std::string& reply) {
    ParseResult result;
    std::vector<std::string> violations;

    enum class Section { Preamble, Reason, Way, Implementation };
    Section section = Section::Preamble;
    bool saw_reason = false;
    bool saw_way = false;
    std::vector<std::string> reason_lines;
    std::vector<std::string> way_lines;
    std::optional<std::vector<std::string>> required;
    bool required_malformed = false;
    std::vector<std::string> fence_lines;
    bool in_fence = false;
    bool fence_done = false;

    for (const std::string& raw : split_lines(reply)) {
        const std::string line = trim(raw);
        if (in_fence) {
            if (line.rfind("```", 0) == 0) {
                in_fence = false;
                fence_done = true;
            } else {
                fence_lines.push_back(raw);
            }
            continue;
        }
        std::string rest;
        if (section_marker(raw, "Reason:", &rest)) {
            section = Section::Reason;
            saw_reason = true;
            if (!rest.empty()) {
                reason_lines.push_back(rest);
            }
            continue;
        }
        if (section_marker(raw, "Way:", &rest)) {
            section = Section::Way;
            saw_way = true;
            if (!rest.empty()) {
                way_lines.push_back(rest);
            }
            continue;
        }
        if (section_marker(raw, "Implementation:", nullptr)) {
            section = Section::Implementation;
            continue;
        }
        if (!fence_done && line.rfind("```", 0) == 0) {
            in_fence = true;
            continue;
        }
        if (line.find("required_feature_columns") != std::string::npos) {
            std::vector<std::string> names;
            if (parse_column_list(line, &names)) {
                required = std::move(names);
            } else {
                required_malformed = true;
            }
            continue;
        }
        if (section == Section::Reason) {
            reason_lines.push_back(raw);
        } else if (section == Section::Way) {
            way_lines.push_back(raw);
        }
    }

    Proposal proposal;
    proposal.reason = join_nonempty(reason_lines);
    proposal.way = join_nonempty(way_lines);
    if (!saw_reason || proposal.reason.empty()) {
        violations.push_back("no reason section");
    }
    if (!saw_way || proposal.way.empty()) {
        violations.push_back("no way section");
    }
    if (required_malformed) {
        violations.push_back("required_feature_columns list is malformed");
    } else if (!required.has_value()) {
        violations.push_back("no required_feature_columns list");
    } else {
        proposal.required_features = *required;
    }

    if (!fence_done) {
        violations.push_back("no operation block");
    } else {
        std::string block;
        for (const std::string& line : fence_lines) {
            block += line;
            block += '\n';
        }
        json doc = json::value_t::discarded;
        try {
            doc = json::parse(block);
        } catch (const json::exception& err) {
            violations.push_back(std::string("operation block is not valid JSON: ") +
                                 err.what());
        }
        if (!doc.is_discarded()) {
            if (!doc.is_array()) {
                violations.push_back("operation block must be a JSON array");
            } else if (doc.empty()) {
                violations.push_back("operation block must name at least one operation");
            } else {
                for (std::size_t i = 0; i < doc.size(); ++i) {
                    try {
                        proposal.ops.push_back(operation_spec_from_json(doc[i]));
                    } catch (const Error& err) {
                        violations.push_back("op " + std::to_string(i + 1) + ": " +
                                             err.what());
                    }
                }
            }
        }
    }

    if (violations.empty()) {
        result.proposal = std::move(proposal);
    }
    result.violations = std::move(violations);
    return result;
}

std::vector<std::string> validate_proposal(const Proposal& proposal,
                                           const ProposerContext& ctx) {
    std::vector<std::string> violations;
    if (proposal.ops.empty()) {
        violations.push_back("proposal has no operations");
        return violations;
    }
    violations = validate_step(proposal.ops, ctx.schema);
    const std::set<std::string> required(proposal.required_features.begin(),
                                         proposal.required_features.end());
    std::set<std::string> flagged;
    for (const OperationSpec& op : proposal.ops) {
        for (const std::string& input : op.inputs) {
            if (required.count(input) == 0 && flagged.insert(input).second) {
                violations.push_back("required_feature_columns misses input column: " +
                                     input);
            }
        }
    }
    return violations;
}

std::string render_reply(const Proposal& proposal) {
    std::string out = "--- Reason: " + proposal.reason + "\n";
    out += "--- Way:\n";
    out += "required_feature_columns = " + json(proposal.required_features).dump() + "\n";
    out += proposal.way + "\n";
    out += "--- Implementation:\n```json\n";
    json ops = json::array();
    for (const OperationSpec& op : proposal.ops) {
        ops.push_back(to_json(op));
    }
    out += ops.dump(2);
    out += "\n```\n";
    return out;
}

ScriptedBackend::ScriptedBackend(std::vector<Proposal> entries)
    : entries_(std::move(entries)) {
    if (entries_.empty()) {
        throw SpecError("scripted backend needs at least one entry");
    }
}

std::string ScriptedBackend::complete(const std::string& prompt, double temperature) {
    (void)prompt;
    (void)temperature;
    const Proposal& entry = entries_[served_ % entries_.size()];
    ++served_;
    return render_reply(entry);
}

std::string ScriptedBackend::name() const {
    return "scripted";
}

std::size_t ScriptedBackend::served() const {
    return served_;
}

LlmBackend::LlmBackend(LlmSettings settings) : settings_(std::move(settings)) {
    if (settings_.base_url.empty()) {
        throw SpecError("llm backend needs a base URL");
    }
}

std::string LlmBackend::complete(const std::string& prompt, double temperature) {
    httplib::Client client(settings_.base_url);
    client.set_connection_timeout(settings_.timeout_seconds, 0);
    client.set_read_timeout(settings_.timeout_seconds, 0);
    client.set_write_timeout(settings_.timeout_seconds, 0);

    httplib::Headers headers;
    if (!settings_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + settings_.api_key);
    }
    const json body = {
        {"model", settings_.model},
        {"temperature", temperature},
        {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
    };
    auto res = client.Post(settings_.path, headers, body.dump(), "application/json");
    if (!res) {
        throw ProposerError("endpoint unreachable: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw ProposerError("endpoint returned status " + std::to_string(res->status));
    }
    json doc = json::value_t::discarded;
    try {
        doc = json::parse(res->body);
    } catch (const json::exception&) {
        throw ProposerError("endpoint reply is not valid JSON");
    }
    if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) {
        throw ProposerError("endpoint reply has no choices");
    }
    const json& message = doc["choices"][0].value("message", json::object());
    if (!message.contains("content") || !message["content"].is_string()) {
        throw ProposerError("endpoint reply has no message content");
    }
    return message["content"].get<std::string>();
}

std::string LlmBackend::name() const {
    return "llm";
}

ProposeResult propose(const ProposerContext& ctx, ProposerBackend& backend,
                      std::mt19937_64& rng) {
    const std::string base_prompt = build_prompt(ctx);
    const double temperature = directive_temperature(ctx.directive);
    std::string prompt = base_prompt;
    // One fresh attempt plus three feedback retries before giving up.
    for (int attempt = 1; attempt <= 4; ++attempt) {
        std::vector<std::string> violations;
        try {
            const std::string reply = backend.complete(prompt, temperature);
            ParseResult parsed = parse_proposal(reply);
            violations = std::move(parsed.violations);
            if (parsed.proposal.has_value()) {
                auto more = validate_proposal(*parsed.proposal, ctx);
                violations.insert(violations.end(), more.begin(), more.end());
                if (violations.empty()) {
                    return ProposeResult{std::move(*parsed.proposal), attempt, false};
                }
            }
        } catch (const Error& err) {
            violations.push_back(std::string("backend error: ") + err.what());
        }
        prompt = base_prompt + "\n[Previous Attempt Rejected]\n";
        for (const std::string& violation : violations) {
            prompt += "- " + violation + "\n";
        }
        prompt += "Reply again following the required format exactly.\n";
    }
    return ProposeResult{fallback_proposal(ctx, rng), 4, true};
}

Proposal fallback_proposal(const ProposerContext& ctx, std::mt19937_64& rng) {
    std::vector<std::pair<std::string, ColumnKind>> features;
    for (const auto& entry : ctx.schema.columns) {
        if (entry.first != ctx.target) {
            features.push_back(entry);
        }
    }
    if (features.empty()) {
        throw ProposerError("no feature columns available for a fallback proposal");
    }
    std::uniform_int_distribution<std::size_t> pick(0, features.size() - 1);
    const auto& [name, kind] = features[pick(rng)];

    Proposal proposal;
    proposal.reason = "Fallback step after repeated invalid proposals.";
    proposal.required_features = {name};
    OperationSpec spec;
    if (kind == ColumnKind::Numeric) {
        spec.kind = OpKind::Impute;
        spec.params = {{"strategy", "mean"}};
        spec.inputs = {name};
        proposal.way = "Impute missing values of '" + name + "' with the train mean.";
    } else {
        spec.kind = OpKind::FrequencyEncode;
        spec.inputs = {name};
        proposal.way = "Replace '" + name + "' with its train-split category counts.";
    }
    proposal.ops = {spec};
    return proposal;
}

}  // namespace tandem
