#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "guesslab/error.hpp"
#include "guesslab/lingo.hpp"
#include "guesslab/world.hpp"

namespace guesslab::metrics {

using json = nlohmann::ordered_json;
using lingo::Answer;
using lingo::Dialogue;

// Fine-grained question classes plus the zero-label bucket.
enum class QType : int {
    SuperCat = 0,
    Object = 1,
    Color = 2,
    Shape = 3,
    Size = 4,
    Texture = 5,
    Location = 6,
    Action = 7,
    NotClassified = 8,
};

inline constexpr int kFineClasses = 8;
inline constexpr int kAllClasses = 9;

inline const char* qtype_name(int k) {
    static const char* names[kAllClasses] = {"super-cat", "object",   "color",
                                             "shape",     "size",     "texture",
                                             "location",  "action",   "not-classified"};
    return names[k];
}

inline bool is_entity_class(int k) {
    return k == static_cast<int>(QType::SuperCat) || k == static_cast<int>(QType::Object);
}

inline bool is_attribute_class(int k) {
    return k >= static_cast<int>(QType::Color) && k <= static_cast<int>(QType::Action);
}

// ---------------------------------------------------------------------------
// Keyword lexicon

class KeywordLexicon {
public:
    KeywordLexicon() : keywords_(kFineClasses) {}

    void add(QType type, const std::string& keyword) {
        std::string k = keyword;
        for (auto& c : k) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        keywords_[static_cast<int>(type)].insert(std::move(k));
    }

    const std::set<std::string>& keywords(int k) const { return keywords_[k]; }

    // Reconstructed keyword lists; taxonomy names feed the entity classes.
    static KeywordLexicon desk_default(const lingo::Taxonomy& taxonomy) {
        KeywordLexicon lex;
        for (const auto& s : taxonomy.super_categories()) lex.add(QType::SuperCat, s);
        for (const auto& c : taxonomy.categories()) lex.add(QType::Object, c);
        for (const auto& c : taxonomy.colors()) lex.add(QType::Color, c);
        for (const char* k : {"square", "round", "circular", "rectangular", "shape"})
            lex.add(QType::Shape, k);
        for (const char* k : {"big", "small", "large", "tiny", "huge"}) lex.add(QType::Size, k);
        for (const char* k : {"striped", "furry", "smooth", "wooden", "metal", "texture"})
            lex.add(QType::Texture, k);
        for (const char* k : {"left", "right", "top", "bottom", "middle", "side", "corner",
                              "front", "behind", "near", "closest"})
            lex.add(QType::Location, k);
        for (const char* k : {"standing", "sitting", "walking", "holding", "wearing", "moving",
                              "eating", "running"})
            lex.add(QType::Action, k);
        return lex;
    }

    json to_json() const {
        json j = json::object();
        for (int k = 0; k < kFineClasses; ++k) {
            json arr = json::array();
            for (const auto& w : keywords_[k]) arr.push_back(w);
            j[qtype_name(k)] = arr;
        }
        return j;
    }

    static KeywordLexicon from_json(const json& j) {
        KeywordLexicon lex;
        for (int k = 0; k < kFineClasses; ++k) {
            const std::string name = qtype_name(k);
            if (!j.contains(name)) continue;
            for (const auto& w : j.at(name))
                lex.add(static_cast<QType>(k), w.get<std::string>());
        }
        return lex;
    }

private:
    std::vector<std::set<std::string>> keywords_;
};

// Multi-label keyword classifier; empty result means not classified.
inline std::set<int> classify_question(const std::string& question, const KeywordLexicon& lex) {
    std::set<int> labels;
    const auto tokens = lingo::tokenize(question);
    for (int k = 0; k < kFineClasses; ++k) {
        for (const auto& tok : tokens) {
            if (lex.keywords(k).count(tok)) {
                labels.insert(k);
                break;
            }
        }
    }
    return labels;
}

// ---------------------------------------------------------------------------
// Corpus statistics

inline std::size_t total_questions(const std::vector<Dialogue>& logs) {
    std::size_t n = 0;
    for (const auto& d : logs) n += d.turns.size();
    return n;
}

// Type/token ratio over all question tokens of all games ("?" counts,
// answers do not).
inline double lexical_diversity(const std::vector<Dialogue>& logs) {
    std::set<std::string> types;
    std::size_t tokens = 0;
    for (const auto& d : logs) {
        for (const auto& t : d.turns) {
            for (const auto& tok : lingo::tokenize(t.question)) {
                types.insert(tok);
                ++tokens;
            }
        }
    }
    if (tokens == 0) throw DomainError("lexical_diversity: no question tokens");
    return static_cast<double>(types.size()) / static_cast<double>(tokens);
}

// Percentage of unique question strings over all questions.
inline double question_diversity(const std::vector<Dialogue>& logs) {
    std::set<std::string> unique;
    std::size_t total = 0;
    for (const auto& d : logs) {
        for (const auto& t : d.turns) {
            unique.insert(t.question);
            ++total;
        }
    }
    if (total == 0) throw DomainError("question_diversity: no questions");
    return 100.0 * static_cast<double>(unique.size()) / static_cast<double>(total);
}

struct RepetitionStats {
    double pct_games_with_repeats = 0.0;
    double pct_games_with_consecutive_repeats = 0.0;
};

inline RepetitionStats repetition_stats(const std::vector<Dialogue>& logs) {
    if (logs.empty()) throw DomainError("repetition_stats: no games");
    std::size_t any = 0, consecutive = 0;
    for (const auto& d : logs) {
        std::set<std::string> seen;
        bool has_any = false, has_consec = false;
        for (std::size_t i = 0; i < d.turns.size(); ++i) {
            if (!seen.insert(d.turns[i].question).second) has_any = true;
            if (i > 0 && d.turns[i].question == d.turns[i - 1].question) has_consec = true;
        }
        any += has_any ? 1 : 0;
        consecutive += has_consec ? 1 : 0;
    }
    RepetitionStats r;
    r.pct_games_with_repeats = 100.0 * static_cast<double>(any) / logs.size();
    r.pct_games_with_consecutive_repeats = 100.0 * static_cast<double>(consecutive) / logs.size();
    return r;
}

// ---------------------------------------------------------------------------
// Question-type distribution and KL divergence

struct TypeDistribution {
    std::array<std::size_t, kAllClasses> counts{};  // label counts; multi-label
    std::size_t total = 0;                          // questions
    std::size_t entity_questions = 0;               // >=1 entity label
    std::size_t attribute_questions = 0;            // >=1 attribute label

    double pct(int k) const {
        return total == 0 ? 0.0 : 100.0 * static_cast<double>(counts[k]) / total;
    }
    double entity_pct() const {
        return total == 0 ? 0.0 : 100.0 * static_cast<double>(entity_questions) / total;
    }
    double attribute_pct() const {
        return total == 0 ? 0.0 : 100.0 * static_cast<double>(attribute_questions) / total;
    }
    double coverage_pct() const { return 100.0 - pct(static_cast<int>(QType::NotClassified)); }

    // Label counts renormalized into a probability vector over all 9 classes.
    std::array<double, kAllClasses> probabilities() const {
        std::array<double, kAllClasses> p{};
        double sum = 0.0;
        for (auto c : counts) sum += static_cast<double>(c);
        if (sum > 0.0)
            for (int k = 0; k < kAllClasses; ++k) p[k] = static_cast<double>(counts[k]) / sum;
        return p;
    }

    json to_json() const {
        json per_class = json::object();
        for (int k = 0; k < kAllClasses; ++k)
            per_class[qtype_name(k)] = json{{"count", counts[k]}, {"pct", pct(k)}};
        return json{{"total_questions", total},
                    {"per_class", per_class},
                    {"entity_pct", entity_pct()},
                    {"attribute_pct", attribute_pct()},
                    {"coverage_pct", coverage_pct()}};
    }
};

// Builds a distribution from per-class weights (percentages or counts),
// e.g. a reference file {"super-cat": 14.51, "object": 23.61, ...}.
inline TypeDistribution type_distribution_from_weights(const json& j) {
    TypeDistribution dist;
    double total = 0.0;
    for (int k = 0; k < kAllClasses; ++k) {
        const std::string name = qtype_name(k);
        if (!j.contains(name)) continue;
        const double w = j.at(name).get<double>();
        if (w < 0.0) throw DomainError("negative weight for class " + name);
        dist.counts[k] = static_cast<std::size_t>(std::llround(w * 1000.0));
        total += w;
    }
    for (auto& [key, value] : j.items()) {
        bool known = false;
        for (int k = 0; k < kAllClasses; ++k)
            if (key == qtype_name(k)) known = true;
        if (!known) throw DomainError("unknown question class in reference: " + key);
    }
    if (total <= 0.0) throw DomainError("reference distribution has no mass");
    dist.total = 1;  // weights only; question counts are not meaningful here
    return dist;
}

inline TypeDistribution type_distribution(const std::vector<Dialogue>& logs,
                                          const KeywordLexicon& lex) {
    TypeDistribution dist;
    for (const auto& d : logs) {
        for (const auto& t : d.turns) {
            ++dist.total;
            const auto labels = classify_question(t.question, lex);
            if (labels.empty()) {
                ++dist.counts[static_cast<int>(QType::NotClassified)];
                continue;
            }
            bool entity = false, attribute = false;
            for (int k : labels) {
                ++dist.counts[k];
                entity = entity || is_entity_class(k);
                attribute = attribute || is_attribute_class(k);
            }
            dist.entity_questions += entity ? 1 : 0;
            dist.attribute_questions += attribute ? 1 : 0;
        }
    }
    if (dist.total == 0) throw DomainError("type_distribution: no questions");
    return dist;
}

// D_KL(model || reference) in nats over the 9 normalized classes, with
// additive smoothing eps on the reference. Zero model entries contribute 0.
inline double kl_divergence(const std::array<double, kAllClasses>& model,
                            const std::array<double, kAllClasses>& reference,
                            double eps = 1e-8) {
    double d = 0.0;
    for (int k = 0; k < kAllClasses; ++k) {
        if (model[k] <= 0.0) continue;
        d += model[k] * std::log(model[k] / (reference[k] + eps));
    }
    return d;
}

inline double kl_divergence(const TypeDistribution& model, const TypeDistribution& reference,
                            double eps = 1e-8) {
    if (model.total == 0 || reference.total == 0)
        throw DomainError("kl_divergence: empty distribution");
    return kl_divergence(model.probabilities(), reference.probabilities(), eps);
}

// ---------------------------------------------------------------------------
// Question-type shift after yes answers

struct ShiftStats {
    std::size_t supercat_pairs = 0;  // Q_t super-cat, answered yes
    std::size_t supercat_shifts = 0; // Q_{t+1} object or attribute
    std::size_t object_pairs = 0;    // Q_t object, answered yes
    std::size_t object_shifts = 0;   // Q_{t+1} attribute

    std::optional<double> supercat_shift_pct() const {
        if (supercat_pairs == 0) return std::nullopt;
        return 100.0 * static_cast<double>(supercat_shifts) / supercat_pairs;
    }
    std::optional<double> object_shift_pct() const {
        if (object_pairs == 0) return std::nullopt;
        return 100.0 * static_cast<double>(object_shifts) / object_pairs;
    }

    json to_json() const {
        json j = json::object();
        j["supercat_pairs"] = supercat_pairs;
        j["supercat_to_obj_or_attr_pct"] =
            supercat_shift_pct() ? json(*supercat_shift_pct()) : json(nullptr);
        j["object_pairs"] = object_pairs;
        j["object_to_attr_pct"] = object_shift_pct() ? json(*object_shift_pct()) : json(nullptr);
        return j;
    }
};

inline ShiftStats shift_table(const std::vector<Dialogue>& logs, const KeywordLexicon& lex) {
    ShiftStats s;
    for (const auto& d : logs) {
        for (std::size_t i = 0; i + 1 < d.turns.size(); ++i) {
            if (d.turns[i].answer != Answer::Yes) continue;
            const auto cur = classify_question(d.turns[i].question, lex);
            const auto nxt = classify_question(d.turns[i + 1].question, lex);
            bool nxt_attr = false, nxt_obj = false;
            for (int k : nxt) {
                nxt_attr = nxt_attr || is_attribute_class(k);
                nxt_obj = nxt_obj || k == static_cast<int>(QType::Object);
            }
            if (cur.count(static_cast<int>(QType::SuperCat))) {
                ++s.supercat_pairs;
                if (nxt_obj || nxt_attr) ++s.supercat_shifts;
            }
            if (cur.count(static_cast<int>(QType::Object))) {
                ++s.object_pairs;
                if (nxt_attr) ++s.object_shifts;
            }
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Full report

struct MetricsReport {
    std::size_t n_games = 0;
    double lexical_diversity = 0.0;
    double question_diversity = 0.0;
    RepetitionStats repetition;
    TypeDistribution distribution;
    ShiftStats shifts;
    std::optional<double> kl_to_reference;

    json to_json() const {
        json j{{"n_games", n_games},
               {"lexical_diversity", lexical_diversity},
               {"question_diversity_pct", question_diversity},
               {"pct_games_with_repeats", repetition.pct_games_with_repeats},
               {"pct_games_with_consecutive_repeats",
                repetition.pct_games_with_consecutive_repeats},
               {"type_distribution", distribution.to_json()},
               {"shift", shifts.to_json()}};
        j["kl_to_reference"] = kl_to_reference ? json(*kl_to_reference) : json(nullptr);
        return j;
    }

    // Aligned-column text table.
    std::string to_table() const {
        char buf[256];
        std::string out;
        auto row = [&](const std::string& name, const std::string& value) {
            std::snprintf(buf, sizeof(buf), "%-36s %14s\n", name.c_str(), value.c_str());
            out += buf;
        };
        auto num = [&](double v) {
            std::snprintf(buf, sizeof(buf), "%.4f", v);
            return std::string(buf);
        };
        row("games", std::to_string(n_games));
        row("questions", std::to_string(distribution.total));
        row("lexical diversity (type/token)", num(lexical_diversity));
        row("question diversity (% unique)", num(question_diversity));
        row("% games with repeated Q's", num(repetition.pct_games_with_repeats));
        row("% games with consecutive repeats",
            num(repetition.pct_games_with_consecutive_repeats));
        row("entity %", num(distribution.entity_pct()));
        row("attribute %", num(distribution.attribute_pct()));
        for (int k = 0; k < kAllClasses; ++k)
            row(std::string("  ") + qtype_name(k) + " %", num(distribution.pct(k)));
        row("coverage %", num(distribution.coverage_pct()));
        row("KL (wrt reference)", kl_to_reference ? num(*kl_to_reference) : "n/a");
        if (shifts.supercat_shift_pct())
            row("super-cat -> obj/attr %", num(*shifts.supercat_shift_pct()));
        else
            row("super-cat -> obj/attr %", "n/a");
        if (shifts.object_shift_pct())
            row("object -> attr %", num(*shifts.object_shift_pct()));
        else
            row("object -> attr %", "n/a");
        return out;
    }
};

inline MetricsReport compute_report(const std::vector<Dialogue>& logs, const KeywordLexicon& lex,
                                    const TypeDistribution* reference = nullptr) {
    MetricsReport r;
    r.n_games = logs.size();
    r.lexical_diversity = lexical_diversity(logs);
    r.question_diversity = question_diversity(logs);
    r.repetition = repetition_stats(logs);
    r.distribution = type_distribution(logs, lex);
    r.shifts = shift_table(logs, lex);
    if (reference) r.kl_to_reference = kl_divergence(r.distribution, *reference);
    return r;
}

// One CSV row of scalars per epoch; values print with full precision so the
// file re-parses losslessly.
inline std::string trace_epochs_csv(const std::vector<std::pair<int, MetricsReport>>& per_epoch) {
    std::string out =
        "epoch,lexical_diversity,question_diversity_pct,pct_games_with_repeats,"
        "pct_games_with_consecutive_repeats,entity_pct,attribute_pct,coverage_pct,"
        "kl_to_reference,supercat_shift_pct,object_shift_pct\n";
    char buf[64];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string(); };
    for (const auto& [epoch, r] : per_epoch) {
        out += std::to_string(epoch);
        out += ',' + num(r.lexical_diversity);
        out += ',' + num(r.question_diversity);
        out += ',' + num(r.repetition.pct_games_with_repeats);
        out += ',' + num(r.repetition.pct_games_with_consecutive_repeats);
        out += ',' + num(r.distribution.entity_pct());
        out += ',' + num(r.distribution.attribute_pct());
        out += ',' + num(r.distribution.coverage_pct());
        out += ',' + opt(r.kl_to_reference);
        out += ',' + opt(r.shifts.supercat_shift_pct());
        out += ',' + opt(r.shifts.object_shift_pct());
        out += '\n';
    }
    return out;
}

inline std::string trace_epochs_csv(const std::vector<MetricsReport>& per_epoch) {
    std::vector<std::pair<int, MetricsReport>> numbered;
    numbered.reserve(per_epoch.size());
    for (std::size_t e = 0; e < per_epoch.size(); ++e)
        numbered.emplace_back(static_cast<int>(e) + 1, per_epoch[e]);
    return trace_epochs_csv(numbered);
}

}  // namespace guesslab::metrics
