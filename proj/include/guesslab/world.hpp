#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "guesslab/error.hpp"
#include "guesslab/rng.hpp"
#include "guesslab/tensor.hpp"

namespace guesslab::world {

using json = nlohmann::ordered_json;

struct Canvas {
    double width = 100.0;
    double height = 100.0;
};

// Closed symbolic world: categories grouped under super-categories, plus colors.
class Taxonomy {
public:
    Taxonomy() = default;

    Taxonomy(std::vector<std::pair<std::string, std::vector<std::string>>> groups,
             std::vector<std::string> colors, Canvas canvas)
        : colors_(std::move(colors)), canvas_(canvas) {
        for (auto& [super_name, cats] : groups) {
            super_categories_.push_back(super_name);
            for (auto& c : cats) {
                if (super_of_.count(c)) throw ConfigError("duplicate category " + c);
                categories_.push_back(c);
                super_of_[c] = super_name;
            }
        }
    }

    // 4 super-categories x 3 categories, 6 colors, 100x100 canvas.
    static Taxonomy desk_default() {
        return Taxonomy(
            {
                {"vehicle", {"car", "truck", "bicycle"}},
                {"animal", {"cat", "dog", "horse"}},
                {"furniture", {"chair", "table", "sofa"}},
                {"food", {"apple", "pizza", "sandwich"}},
            },
            {"red", "blue", "green", "yellow", "white", "black"}, Canvas{100.0, 100.0});
    }

    const std::vector<std::string>& super_categories() const { return super_categories_; }
    const std::vector<std::string>& categories() const { return categories_; }
    const std::vector<std::string>& colors() const { return colors_; }
    const Canvas& canvas() const { return canvas_; }

    const std::string& super_of(const std::string& category) const {
        auto it = super_of_.find(category);
        if (it == super_of_.end()) throw LookupError("unknown category " + category);
        return it->second;
    }

    bool is_category(const std::string& name) const { return super_of_.count(name) != 0; }

    bool is_super_category(const std::string& name) const {
        for (const auto& s : super_categories_)
            if (s == name) return true;
        return false;
    }

    bool is_color(const std::string& name) const {
        for (const auto& c : colors_)
            if (c == name) return true;
        return false;
    }

    std::size_t category_index(const std::string& name) const {
        for (std::size_t i = 0; i < categories_.size(); ++i)
            if (categories_[i] == name) return i;
        throw LookupError("unknown category " + name);
    }

    std::size_t color_index(const std::string& name) const {
        for (std::size_t i = 0; i < colors_.size(); ++i)
            if (colors_[i] == name) return i;
        throw LookupError("unknown color " + name);
    }

    json to_json() const {
        json groups = json::object();
        for (const auto& s : super_categories_) {
            json cats = json::array();
            for (const auto& c : categories_)
                if (super_of_.at(c) == s) cats.push_back(c);
            groups[s] = cats;
        }
        return json{{"super_categories", groups},
                    {"colors", colors_},
                    {"canvas", {{"width", canvas_.width}, {"height", canvas_.height}}}};
    }

    static Taxonomy from_json(const json& j) {
        std::vector<std::pair<std::string, std::vector<std::string>>> groups;
        for (auto& [super_name, cats] : j.at("super_categories").items()) {
            groups.emplace_back(super_name, cats.get<std::vector<std::string>>());
        }
        Canvas canvas{j.at("canvas").at("width").get<double>(),
                      j.at("canvas").at("height").get<double>()};
        return Taxonomy(std::move(groups), j.at("colors").get<std::vector<std::string>>(), canvas);
    }

private:
    std::vector<std::string> super_categories_;
    std::vector<std::string> categories_;
    std::map<std::string, std::string> super_of_;
    std::vector<std::string> colors_;
    Canvas canvas_;
};

struct BBox {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double cx() const { return x + w / 2.0; }
    double cy() const { return y + h / 2.0; }
};

struct SceneObject {
    int id = 0;
    std::string category;
    std::string super_category;
    std::string color;
    BBox bbox;
};

struct Scene {
    int id = 0;
    std::vector<SceneObject> objects;
    Tensor features;

    const SceneObject& object_by_id(int object_id) const {
        for (const auto& o : objects)
            if (o.id == object_id) return o;
        throw LookupError("object " + std::to_string(object_id) + " not in scene " +
                          std::to_string(id));
    }

    bool has_object(int object_id) const {
        for (const auto& o : objects)
            if (o.id == object_id) return true;
        return false;
    }
};

// 8-value spatial layout: [x_min*, y_min*, x_max*, y_max*, x_c*, y_c*, w*, h*]
// with coordinates mapped to [-1, 1] via v* = 2v/extent - 1 and sizes to
// w* = 2w/width, h* = 2h/height.
inline Tensor spatial_encode(const SceneObject& obj, const Canvas& canvas) {
    const double W = canvas.width;
    const double H = canvas.height;
    const BBox& b = obj.bbox;
    return Tensor::row({2.0 * b.x / W - 1.0, 2.0 * b.y / H - 1.0, 2.0 * (b.x + b.w) / W - 1.0,
                        2.0 * (b.y + b.h) / H - 1.0, 2.0 * b.cx() / W - 1.0,
                        2.0 * b.cy() / H - 1.0, 2.0 * b.w / W, 2.0 * b.h / H});
}

inline BBox spatial_decode(const Tensor& enc, const Canvas& canvas) {
    const double W = canvas.width;
    const double H = canvas.height;
    BBox b;
    b.x = (enc[0] + 1.0) * W / 2.0;
    b.y = (enc[1] + 1.0) * H / 2.0;
    b.w = (enc[2] + 1.0) * W / 2.0 - b.x;
    b.h = (enc[3] + 1.0) * H / 2.0 - b.y;
    return b;
}

// Fixed random projection standing in for a CNN: scene features are the
// L2-normalized sum of per-object projections of
// (one-hot category ++ one-hot color ++ spatial_encode), plus sigma=0.01 noise.
class FeatureProjector {
public:
    FeatureProjector() = default;

    FeatureProjector(const Taxonomy& taxonomy, std::size_t feature_dim, uint64_t seed)
        : n_categories_(taxonomy.categories().size()),
          n_colors_(taxonomy.colors().size()),
          feature_dim_(feature_dim) {
        const std::size_t in = input_dim();
        Rng rng = derive_stream(seed, "world.feature_projection");
        projection_ = Tensor({in, feature_dim});
        const double scale = 1.0 / std::sqrt(static_cast<double>(in));
        for (std::size_t i = 0; i < projection_.size(); ++i)
            projection_[i] = rng.normal(0.0, scale);
    }

    std::size_t feature_dim() const { return feature_dim_; }
    std::size_t input_dim() const { return n_categories_ + n_colors_ + 8; }

    Tensor features(const Taxonomy& taxonomy, const Scene& scene, Rng& noise_rng,
                    bool with_noise = true) const {
        Tensor out({feature_dim_});
        for (const auto& obj : scene.objects) {
            std::vector<double> in(input_dim(), 0.0);
            in[taxonomy.category_index(obj.category)] = 1.0;
            in[n_categories_ + taxonomy.color_index(obj.color)] = 1.0;
            Tensor sp = spatial_encode(obj, taxonomy.canvas());
            for (std::size_t k = 0; k < 8; ++k) in[n_categories_ + n_colors_ + k] = sp[k];
            for (std::size_t i = 0; i < input_dim(); ++i) {
                if (in[i] == 0.0) continue;
                const double* row = projection_.data() + i * feature_dim_;
                for (std::size_t j = 0; j < feature_dim_; ++j) out[j] += in[i] * row[j];
            }
        }
        double norm = 0.0;
        for (std::size_t j = 0; j < feature_dim_; ++j) norm += out[j] * out[j];
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (std::size_t j = 0; j < feature_dim_; ++j) out[j] /= norm;
        if (with_noise)
            for (std::size_t j = 0; j < feature_dim_; ++j) out[j] += noise_rng.normal(0.0, 0.01);
        return out;
    }

private:
    std::size_t n_categories_ = 0;
    std::size_t n_colors_ = 0;
    std::size_t feature_dim_ = 0;
    Tensor projection_;
};

// Object categories and colors are sampled uniformly; boxes have side lengths
// uniform in [8%, 40%] of the canvas extent and are placed fully inside it.
// cluster_prob makes an object copy an earlier object's category (real scenes
// repeat object types); the per-object marginal stays uniform.
inline Scene generate_scene(const Taxonomy& taxonomy, const FeatureProjector& projector,
                            int scene_id, Rng& rng, uint64_t noise_seed, int min_objects = 3,
                            int max_objects = 8, double cluster_prob = 0.0) {
    if (taxonomy.categories().empty() || taxonomy.colors().empty())
        throw ConfigError("generate_scene: empty taxonomy");
    if (max_objects < min_objects)
        throw ConfigError("generate_scene: max_objects " + std::to_string(max_objects) +
                          " < min_objects " + std::to_string(min_objects));
    Scene scene;
    scene.id = scene_id;
    const int n = min_objects + static_cast<int>(rng.below(max_objects - min_objects + 1));
    const Canvas& canvas = taxonomy.canvas();
    for (int i = 0; i < n; ++i) {
        SceneObject obj;
        obj.id = i;
        if (i > 0 && rng.uniform() < cluster_prob) {
            obj.category = scene.objects[rng.below(scene.objects.size())].category;
        } else {
            obj.category = taxonomy.categories()[rng.below(taxonomy.categories().size())];
        }
        obj.super_category = taxonomy.super_of(obj.category);
        obj.color = taxonomy.colors()[rng.below(taxonomy.colors().size())];
        obj.bbox.w = rng.uniform(0.08 * canvas.width, 0.40 * canvas.width);
        obj.bbox.h = rng.uniform(0.08 * canvas.height, 0.40 * canvas.height);
        obj.bbox.x = rng.uniform(0.0, canvas.width - obj.bbox.w);
        obj.bbox.y = rng.uniform(0.0, canvas.height - obj.bbox.h);
        scene.objects.push_back(std::move(obj));
    }
    Rng noise = derive_stream(noise_seed, "world.feature_noise", static_cast<uint64_t>(scene_id));
    scene.features = projector.features(taxonomy, scene, noise);
    return scene;
}

inline json scene_to_json(const Scene& scene, const Canvas& canvas) {
    json objects = json::array();
    for (const auto& o : scene.objects) {
        objects.push_back(json{{"id", o.id},
                               {"category", o.category},
                               {"super_category", o.super_category},
                               {"color", o.color},
                               {"bbox", {o.bbox.x, o.bbox.y, o.bbox.w, o.bbox.h}}});
    }
    return json{{"id", scene.id},
                {"image", {{"width", canvas.width}, {"height", canvas.height}}},
                {"objects", objects}};
}

// Features are not serialized; they are a pure function of the scene content
// and the experiment seed, so loaders recompute them.
inline Scene scene_from_json(const json& j) {
    Scene scene;
    scene.id = j.at("id").get<int>();
    for (const auto& jo : j.at("objects")) {
        SceneObject o;
        o.id = jo.at("id").get<int>();
        o.category = jo.at("category").get<std::string>();
        o.super_category = jo.at("super_category").get<std::string>();
        o.color = jo.at("color").get<std::string>();
        const auto& bb = jo.at("bbox");
        o.bbox = BBox{bb.at(0).get<double>(), bb.at(1).get<double>(), bb.at(2).get<double>(),
                      bb.at(3).get<double>()};
        scene.objects.push_back(std::move(o));
    }
    return scene;
}

}  // namespace guesslab::world
