#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "guesslab/error.hpp"
#include "guesslab/rng.hpp"
#include "guesslab/world.hpp"

namespace guesslab::lingo {

using json = nlohmann::ordered_json;
using world::Scene;
using world::SceneObject;
using world::Taxonomy;

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
public:
    // Reserved ids, fixed in this order.
    static constexpr std::size_t kPad = 0;
    static constexpr std::size_t kStart = 1;
    static constexpr std::size_t kStop = 2;
    static constexpr std::size_t kUnk = 3;
    static constexpr std::size_t kYes = 4;
    static constexpr std::size_t kNo = 5;
    static constexpr std::size_t kQMark = 6;
    static constexpr std::size_t kReservedCount = 7;

    Vocabulary() {
        for (const char* t : {"<pad>", "<start>", "<stop>", "<unk>", "<yes>", "<no>", "?"})
            push(t);
    }

    void push(const std::string& token) {
        if (token_to_id_.count(token)) throw ConfigError("duplicate vocab token: " + token);
        token_to_id_[token] = id_to_token_.size();
        id_to_token_.push_back(token);
    }

    std::size_t size() const { return id_to_token_.size(); }

    std::size_t id(const std::string& token) const {
        auto it = token_to_id_.find(token);
        return it == token_to_id_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& token) const { return token_to_id_.count(token) != 0; }

    const std::string& token(std::size_t id) const {
        if (id >= id_to_token_.size())
            throw DomainError("token id " + std::to_string(id) + " out of vocab range");
        return id_to_token_[id];
    }

    std::vector<std::size_t> encode(const std::vector<std::string>& tokens) const {
        std::vector<std::size_t> ids;
        ids.reserve(tokens.size());
        for (const auto& t : tokens) ids.push_back(id(t));
        return ids;
    }

    std::string decode(const std::vector<std::size_t>& ids) const {
        std::string out;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (i) out += ' ';
            out += token(ids[i]);
        }
        return out;
    }

    json to_json() const { return json{{"tokens", id_to_token_}}; }

    static Vocabulary from_json(const json& j) {
        Vocabulary v;
        const auto tokens = j.at("tokens").get<std::vector<std::string>>();
        if (tokens.size() < kReservedCount) throw DataError("vocab file too small");
        for (std::size_t i = 0; i < kReservedCount; ++i)
            if (tokens[i] != v.id_to_token_[i])
                throw DataError("vocab reserved token mismatch at id " + std::to_string(i));
        for (std::size_t i = kReservedCount; i < tokens.size(); ++i) v.push(tokens[i]);
        return v;
    }

private:
    std::vector<std::string> id_to_token_;
    std::map<std::string, std::size_t> token_to_id_;
};

// Lowercase, whitespace-split; "?" is always its own token.
inline std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (char ch : text) {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (c == '?') {
            flush();
            out.emplace_back("?");
        } else {
            cur += c;
        }
    }
    flush();
    return out;
}

inline std::vector<std::size_t> tokenize_ids(const std::string& text, const Vocabulary& vocab) {
    return vocab.encode(tokenize(text));
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Template grammar

enum class Slot { SuperCat, Category, Color, Zone, Size };

enum class Zone { Left, Right, Top, Bottom, Middle };

inline const char* zone_name(Zone z) {
    switch (z) {
        case Zone::Left: return "left";
        case Zone::Right: return "right";
        case Zone::Top: return "top";
        case Zone::Bottom: return "bottom";
        case Zone::Middle: return "middle";
    }
    return "";
}

inline const std::vector<Zone>& all_zones() {
    static const std::vector<Zone> zones = {Zone::Left, Zone::Right, Zone::Top, Zone::Bottom,
                                            Zone::Middle};
    return zones;
}

// A parsed (or to-be-realized) question: one slot plus its value.
struct QuestionBinding {
    Slot slot;
    std::string value;  // category/super-category/color name, zone name, or "big"/"small"

    bool operator==(const QuestionBinding& other) const {
        return slot == other.slot && value == other.value;
    }
};

inline bool starts_with_vowel(const std::string& s) {
    if (s.empty()) return false;
    switch (s[0]) {
        case 'a':
        case 'e':
        case 'i':
        case 'o':
        case 'u': return true;
        default: return false;
    }
}

// Surface realization. Article selection is cosmetic; the parser accepts both.
inline std::string realize(const QuestionBinding& b) {
    switch (b.slot) {
        case Slot::SuperCat:
        case Slot::Category:
            return std::string("is it ") + (starts_with_vowel(b.value) ? "an " : "a ") + b.value +
                   " ?";
        case Slot::Color: return "is it " + b.value + " ?";
        case Slot::Zone:
            if (b.value == "left" || b.value == "right") return "is it on the " + b.value + " ?";
            if (b.value == "middle") return "is it in the middle ?";
            return "is it at the " + b.value + " ?";
        case Slot::Size: return "is it " + b.value + " ?";
    }
    throw DomainError("unreachable template slot");
}

// Parses a question against the closed grammar. Returns nullopt when the
// question has no reading (model output may be arbitrary token soup).
inline std::optional<QuestionBinding> parse_question(const std::vector<std::string>& tokens,
                                                     const Taxonomy& taxonomy) {
    if (tokens.size() < 4 || tokens.front() != "is" || tokens[1] != "it" || tokens.back() != "?")
        return std::nullopt;

    // "is it (a|an) X ?"  -> category or super-category
    if (tokens.size() == 5 && (tokens[2] == "a" || tokens[2] == "an")) {
        const std::string& name = tokens[3];
        if (taxonomy.is_super_category(name)) return QuestionBinding{Slot::SuperCat, name};
        if (taxonomy.is_category(name)) return QuestionBinding{Slot::Category, name};
        return std::nullopt;
    }
    // "is it X ?" -> color or size
    if (tokens.size() == 4) {
        const std::string& word = tokens[2];
        if (taxonomy.is_color(word)) return QuestionBinding{Slot::Color, word};
        if (word == "big" || word == "small") return QuestionBinding{Slot::Size, word};
        return std::nullopt;
    }
    // "is it on the left ?" / "is it at the top ?" / "is it in the middle ?"
    if (tokens.size() == 6 && (tokens[2] == "on" || tokens[2] == "at" || tokens[2] == "in") &&
        tokens[3] == "the") {
        const std::string& z = tokens[4];
        for (Zone zone : all_zones())
            if (z == zone_name(zone)) return QuestionBinding{Slot::Zone, z};
        return std::nullopt;
    }
    return std::nullopt;
}

inline std::optional<QuestionBinding> parse_question(const std::string& text,
                                                     const Taxonomy& taxonomy) {
    return parse_question(tokenize(text), taxonomy);
}

// Zone membership tests use the box center against a 3x3 canvas grid.
inline bool in_zone(const SceneObject& obj, Zone zone, const world::Canvas& canvas) {
    const double cx = obj.bbox.cx();
    const double cy = obj.bbox.cy();
    const double W = canvas.width;
    const double H = canvas.height;
    switch (zone) {
        case Zone::Left: return cx < W / 3.0;
        case Zone::Right: return cx > 2.0 * W / 3.0;
        case Zone::Top: return cy < H / 3.0;
        case Zone::Bottom: return cy > 2.0 * H / 3.0;
        case Zone::Middle:
            return cx >= W / 3.0 && cx <= 2.0 * W / 3.0 && cy >= H / 3.0 && cy <= 2.0 * H / 3.0;
    }
    return false;
}

// Size thresholds as fractions of canvas area; mid-size objects are neither.
inline constexpr double kBigAreaFraction = 0.08;
inline constexpr double kSmallAreaFraction = 0.03;

inline bool predicate_holds(const QuestionBinding& b, const SceneObject& obj,
                            const Taxonomy& taxonomy) {
    switch (b.slot) {
        case Slot::SuperCat: return obj.super_category == b.value;
        case Slot::Category: return obj.category == b.value;
        case Slot::Color: return obj.color == b.value;
        case Slot::Zone:
            for (Zone z : all_zones())
                if (b.value == zone_name(z)) return in_zone(obj, z, taxonomy.canvas());
            return false;
        case Slot::Size: {
            const auto& canvas = taxonomy.canvas();
            const double area = obj.bbox.w * obj.bbox.h;
            const double canvas_area = canvas.width * canvas.height;
            if (b.value == "big") return area >= kBigAreaFraction * canvas_area;
            if (b.value == "small") return area <= kSmallAreaFraction * canvas_area;
            return false;
        }
    }
    return false;
}

// ---------------------------------------------------------------------------
// Dialogues

enum class Answer { Yes, No };

inline const char* answer_name(Answer a) { return a == Answer::Yes ? "yes" : "no"; }

inline std::size_t answer_token_id(Answer a) {
    return a == Answer::Yes ? Vocabulary::kYes : Vocabulary::kNo;
}

struct Turn {
    std::string question;  // canonical spaced tokens, ending in "?"
    Answer answer = Answer::No;
};

enum class Status { Success, Failure, Incomplete };

inline const char* status_name(Status s) {
    switch (s) {
        case Status::Success: return "success";
        case Status::Failure: return "failure";
        case Status::Incomplete: return "incomplete";
    }
    return "";
}

inline Status status_from_string(const std::string& s) {
    if (s == "success") return Status::Success;
    if (s == "failure") return Status::Failure;
    if (s == "incomplete") return Status::Incomplete;
    throw DataError("unknown game status: " + s);
}

struct Dialogue {
    int id = 0;
    int scene_id = 0;
    int target_id = 0;
    std::vector<Turn> turns;
    std::optional<int> guess_id;
    Status status = Status::Incomplete;
};

inline json dialogue_to_json(const Dialogue& d) {
    json qas = json::array();
    for (const auto& t : d.turns)
        qas.push_back(json{{"question", t.question}, {"answer", answer_name(t.answer)}});
    json j{{"id", d.id},
           {"scene_id", d.scene_id},
           {"object_id", d.target_id},
           {"status", status_name(d.status)},
           {"qas", qas}};
    if (d.guess_id) j["guess_id"] = *d.guess_id;
    return j;
}

// Accepts both this artifact's lines and the public GuessWhat?! superset
// (image.id for the scene, capitalized answers, extra fields ignored).
inline Dialogue dialogue_from_json(const json& j) {
    Dialogue d;
    d.id = j.value("id", 0);
    if (j.contains("scene_id")) {
        d.scene_id = j.at("scene_id").get<int>();
    } else if (j.contains("image") && j.at("image").contains("id")) {
        d.scene_id = j.at("image").at("id").get<int>();
    } else {
        throw DataError("game line has neither scene_id nor image.id");
    }
    d.target_id = j.at("object_id").get<int>();
    d.status = status_from_string(j.at("status").get<std::string>());
    for (const auto& qa : j.at("qas")) {
        Turn t;
        t.question = join_tokens(tokenize(qa.at("question").get<std::string>()));
        std::string a = qa.at("answer").get<std::string>();
        std::transform(a.begin(), a.end(), a.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        t.answer = (a == "yes" || a == "<yes>") ? Answer::Yes : Answer::No;
        d.turns.push_back(std::move(t));
    }
    if (j.contains("guess_id") && !j.at("guess_id").is_null())
        d.guess_id = j.at("guess_id").get<int>();
    return d;
}

// ---------------------------------------------------------------------------
// Gold-dialogue scripting

namespace detail {

inline std::optional<QuestionBinding> true_binding_for_slot(Slot slot, const SceneObject& target,
                                                            const Taxonomy& taxonomy) {
    switch (slot) {
        case Slot::SuperCat: return QuestionBinding{slot, target.super_category};
        case Slot::Category: return QuestionBinding{slot, target.category};
        case Slot::Color: return QuestionBinding{slot, target.color};
        case Slot::Zone:
            for (Zone z : all_zones())
                if (in_zone(target, z, taxonomy.canvas()))
                    return QuestionBinding{slot, zone_name(z)};
            return std::nullopt;
        case Slot::Size:
            for (const char* s : {"big", "small"}) {
                QuestionBinding b{slot, s};
                if (predicate_holds(b, target, taxonomy)) return b;
            }
            return std::nullopt;
    }
    return std::nullopt;
}

inline std::vector<std::string> slot_values(Slot slot, const Taxonomy& taxonomy) {
    switch (slot) {
        case Slot::SuperCat: return taxonomy.super_categories();
        case Slot::Category: return taxonomy.categories();
        case Slot::Color: return taxonomy.colors();
        case Slot::Zone: {
            std::vector<std::string> out;
            for (Zone z : all_zones()) out.emplace_back(zone_name(z));
            return out;
        }
        case Slot::Size: return {"big", "small"};
    }
    return {};
}

inline std::optional<QuestionBinding> false_binding_for_slot(Slot slot, const SceneObject& target,
                                                             const Taxonomy& taxonomy, Rng& rng) {
    std::vector<QuestionBinding> candidates;
    for (const auto& v : slot_values(slot, taxonomy)) {
        QuestionBinding b{slot, v};
        if (!predicate_holds(b, target, taxonomy)) candidates.push_back(std::move(b));
    }
    if (candidates.empty()) return std::nullopt;
    return candidates[rng.below(candidates.size())];
}

}  // namespace detail

// Candidate-set-halving script standing in for human Questioner data:
// super-category, category, then discriminative attributes (color, zone,
// size when the target has one) until the set of objects consistent with all
// answers is a singleton or the budget runs out. With probability
// distractor_prob per slot, a false same-slot variant is asked first
// (answered no). Answers are computed from the template predicates, which is
// exactly what the rule-based oracle does.
inline Dialogue script_gold_dialogue(const Scene& scene, int target_id, int budget,
                                     const Taxonomy& taxonomy, Rng& rng,
                                     double distractor_prob = 0.25) {
    const SceneObject& target = scene.object_by_id(target_id);

    Dialogue d;
    d.scene_id = scene.id;
    d.target_id = target_id;

    std::vector<const SceneObject*> candidates;
    for (const auto& o : scene.objects) candidates.push_back(&o);

    auto apply_answer = [&](const QuestionBinding& b, Answer a) {
        std::vector<const SceneObject*> kept;
        for (const auto* o : candidates) {
            const bool holds = predicate_holds(b, *o, taxonomy);
            if ((a == Answer::Yes) == holds) kept.push_back(o);
        }
        candidates = std::move(kept);
    };

    auto ask = [&](const QuestionBinding& b) {
        const bool holds = predicate_holds(b, target, taxonomy);
        const Answer a = holds ? Answer::Yes : Answer::No;
        d.turns.push_back(Turn{realize(b), a});
        apply_answer(b, a);
    };

    const std::vector<Slot> entity_slots = {Slot::SuperCat, Slot::Category};
    const std::vector<Slot> attribute_slots = {Slot::Color, Slot::Zone, Slot::Size};

    auto budget_left = [&] { return static_cast<int>(d.turns.size()) < budget; };

    auto run_slot = [&](Slot slot) {
        auto truth = detail::true_binding_for_slot(slot, target, taxonomy);
        if (!truth) return;  // e.g. mid-size target: no true size question exists
        if (rng.uniform() < distractor_prob) {
            auto distractor = detail::false_binding_for_slot(slot, target, taxonomy, rng);
            if (distractor && budget_left()) ask(*distractor);
        }
        if (budget_left()) ask(*truth);
    };

    for (Slot slot : entity_slots) {
        if (!budget_left()) break;
        run_slot(slot);
    }
    for (Slot slot : attribute_slots) {
        if (!budget_left() || candidates.size() <= 1) break;
        run_slot(slot);
    }

    if (candidates.size() == 1 && candidates.front()->id == target_id) {
        d.status = Status::Success;
        d.guess_id = target_id;
    } else {
        d.status = Status::Incomplete;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Vocabulary construction

// Reserved ids first, then corpus tokens by descending frequency, ties broken
// lexicographically.
inline Vocabulary build_vocab(const std::vector<Dialogue>& corpus) {
    if (corpus.empty()) throw DataError("build_vocab: empty corpus");
    std::map<std::string, std::size_t> freq;
    for (const auto& d : corpus)
        for (const auto& t : d.turns)
            for (const auto& tok : tokenize(t.question)) ++freq[tok];

    std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary vocab;
    for (const auto& [token, count] : items) {
        (void)count;
        if (!vocab.contains(token)) vocab.push(token);
    }
    return vocab;
}

}  // namespace guesslab::lingo
