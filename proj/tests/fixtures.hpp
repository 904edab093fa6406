#pragma once

// Synthetic data shared by the integration tests and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <snapntell/snapntell.hpp>

#define EXPECT_ERROR_KIND(stmt, expected)                                          \
    do {                                                                           \
        try {                                                                      \
            stmt;                                                                  \
            ADD_FAILURE() << "expected " << snt::kind_name(expected) << " from " #stmt; \
        } catch (const snt::Error& err_) {                                         \
            EXPECT_EQ(snt::kind_name(err_.kind()), snt::kind_name(expected)) << err_.what(); \
        }                                                                          \
    } while (0)

namespace snt::testing {

inline EmbeddingVector random_vector(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<float> dist(0.0f, 1.0f);
    EmbeddingVector v(dim);
    for (auto& x : v) x = dist(rng);
    return v;
}

/// Independent oracle: score every entry, full sort by (score desc, id asc).
inline std::vector<std::uint64_t> brute_force_knn(const EmbeddingIndex& index,
                                                  std::span<const float> query, std::size_t k) {
    double qn = 0.0;
    for (float x : query) qn += double(x) * x;
    qn = std::sqrt(qn);
    std::vector<float> q(query.size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = static_cast<float>(double(query[i]) / qn);

    std::vector<std::pair<double, std::uint64_t>> all;
    for (const auto& e : index.entries()) {
        double s = 0.0;
        for (std::size_t i = 0; i < q.size(); ++i) s += double(q[i]) * e.vector[i];
        all.emplace_back(s, e.entry_id);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::uint64_t> ids;
    for (std::size_t i = 0; i < std::min(k, all.size()); ++i) ids.push_back(all[i].second);
    return ids;
}

inline std::vector<std::uint64_t> ids_of(const RetrievalSet& rs) {
    std::vector<std::uint64_t> ids;
    for (const auto& h : rs.hits) ids.push_back(h.entry_id);
    return ids;
}

struct CorpusEntity {
    std::string entity_id;
    std::string name;
    Category category;
    std::string summary;
    std::string image_id;       // query image whose embedding is stored in the index
    EmbeddingVector embedding;  // the stored vector used as query
};

/// 20 named entities, three index entries each (one exact, two perturbed).
struct SyntheticCorpus {
    std::vector<CorpusEntity> entities;
    std::shared_ptr<EmbeddingIndex> index;
    std::shared_ptr<KnowledgeStore> store;
    std::shared_ptr<FixtureEmbeddings> embeddings;
    std::shared_ptr<FixtureDetector> detector;
};

inline SyntheticCorpus make_corpus(std::uint64_t seed = 7, std::size_t dim = 32) {
    static const std::vector<std::pair<std::string, Category>> names = {
        {"Abel Tasman National Park", Category::Landmark},
        {"Acropolis Museum", Category::Landmark},
        {"Niagara Falls", Category::Landmark},
        {"The Starry Night", Category::Painting},
        {"Girl with a Pearl Earring", Category::Painting},
        {"The Thinker", Category::Sculpture},
        {"Pad Thai", Category::Food},
        {"Rambutan", Category::Fruit},
        {"Romanesco Broccoli", Category::Vegetable},
        {"Siberian Tiger", Category::Mammal},
        {"Alaskan Malamute", Category::Mammal},
        {"Axolotl", Category::Amphibian},
        {"Atlas Moth", Category::Insect},
        {"Mandarin Fish", Category::Fish},
        {"Resplendent Quetzal", Category::Bird},
        {"Komodo Dragon", Category::Reptile},
        {"Theremin", Category::Instrument},
        {"Venus Flytrap", Category::Plant},
        {"Ray Ban Stories Glasses", Category::Electronics},
        {"Ford Model T", Category::Car},
    };

    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.0f, 0.05f);
    SyntheticCorpus c;
    c.index = std::make_shared<EmbeddingIndex>();
    c.store = std::make_shared<KnowledgeStore>();
    c.embeddings = std::make_shared<FixtureEmbeddings>();
    c.detector = std::make_shared<FixtureDetector>();

    std::uint64_t next_id = 1;
    for (std::size_t i = 0; i < names.size(); ++i) {
        CorpusEntity e;
        e.entity_id = "ent-" + std::to_string(i);
        e.name = names[i].first;
        e.category = names[i].second;
        e.summary = e.name + " is a well documented " + std::string(to_string(e.category)) +
                    " with a long recorded history.";
        e.image_id = "img-" + std::to_string(i);
        auto base = random_vector(rng, dim);
        for (int variant = 0; variant < 3; ++variant) {
            IndexEntry entry;
            entry.entry_id = next_id++;
            entry.vector = base;
            if (variant > 0)
                for (auto& x : entry.vector) x += noise(rng);
            entry.caption = "A photo of " + e.name;
            entry.entity_id = e.entity_id;
            entry.image_uri = "file://images/" + e.entity_id + "-" + std::to_string(variant) + ".jpg";
            c.index->add(entry);
        }
        e.embedding = base;
        c.embeddings->set(e.image_id, base);
        c.detector->set(e.image_id, {{{0.1, 0.1, 0.6, 0.7}, e.name, 0.9}});
        c.store->add({e.entity_id, e.name, e.category, e.summary, {}, {}});
        c.entities.push_back(std::move(e));
    }
    c.index->seal();
    return c;
}

inline ImageRef image_for(const CorpusEntity& e) {
    return {e.image_id, "file://queries/" + e.image_id + ".jpg", 640, 480, std::nullopt};
}

} // namespace snt::testing

namespace snt::testing {

inline adapter::AdapterConfig small_adapter_config() {
    adapter::AdapterConfig cfg;
    cfg.n_latents = 4;
    cfg.d_img = 8;
    cfg.d_text = 8;
    cfg.n_patches = 6;
    cfg.vocab = 16;
    cfg.n_layers = 1;
    cfg.profile = adapter::Profile::Test;
    return cfg;
}

inline adapter::Matrix normal_matrix(std::mt19937_64& rng, int rows, int cols, double sd = 1.0) {
    std::normal_distribution<double> nd(0.0, sd);
    adapter::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = nd(rng);
    return m;
}

/// Three images, each paired with one token repeated three times.
inline std::vector<adapter::TrainingExample> toy_dataset() {
    std::mt19937_64 rng(5);
    std::vector<adapter::TrainingExample> data;
    for (int i = 0; i < 3; ++i) {
        int t = 2 + 5 * i;
        data.push_back({{normal_matrix(rng, 6, 8)}, {t, t, t}});
    }
    return data;
}

inline adapter::FrozenLmStub toy_lm() { return adapter::FrozenLmStub::random(16, 8, 11, 1.0); }

struct GradInstance {
    adapter::AdapterParams params;
    adapter::FrozenLmStub lm;
    adapter::EncodedImage image;
    std::vector<int> tokens;
};

/// Random instance for gradient checking: m=4, d_img=d_text=8, V=16, L=3.
/// Weights are U(-scale, scale).
inline GradInstance grad_instance(std::uint64_t seed, int n_layers = 1, double scale = 0.3) {
    auto cfg = small_adapter_config();
    cfg.n_layers = n_layers;
    std::mt19937_64 rng(seed * 7919 + 1);
    GradInstance g{adapter::AdapterParams::init(cfg, seed, scale),
                   adapter::FrozenLmStub::random(16, 8, seed + 1000, 1.0),
                   {normal_matrix(rng, 5, 8)},
                   {}};
    std::uniform_int_distribution<int> tok(0, 15);
    for (int i = 0; i < 3; ++i) g.tokens.push_back(tok(rng));
    return g;
}

} // namespace snt::testing

namespace snt::testing {

inline dataset::EntityManifestRow manifest_row(std::string name, Category cat, std::size_t images,
                                               std::string wiki = "auto", bool ambiguous = false) {
    dataset::EntityManifestRow row;
    row.entity_name = name;
    row.category = cat;
    row.wiki_url = wiki == "auto" ? "https://en.wikipedia.org/wiki/" + name : wiki;
    row.ambiguous_flag = ambiguous;
    for (std::size_t i = 0; i < images; ++i) {
        std::string n = name + "_" + std::to_string(i);
        row.image_records.push_back({"https://img.example.org/" + n + ".jpg",
                                     "https://src.example.org/" + n, n + ".jpg"});
    }
    return row;
}

/// 14 entities with disjoint plants: 2 without a wiki URL, 3 with fewer than
/// 10 images, 1 flagged ambiguous.
inline dataset::Manifest planted_manifest() {
    return {
        manifest_row("Eiffel Tower", Category::Landmark, 12),
        manifest_row("Big Ben", Category::Landmark, 10),
        manifest_row("Mount Nobody", Category::Landmark, 11, ""),
        manifest_row("Colosseum", Category::Landmark, 9),
        manifest_row("Mercury", Category::Landmark, 10, "auto", true),
        manifest_row("Mona Lisa", Category::Painting, 10),
        manifest_row("The Scream", Category::Painting, 13),
        manifest_row("Untitled Sketch", Category::Painting, 10, ""),
        manifest_row("Water Lilies", Category::Painting, 5),
        manifest_row("Siberian Tiger", Category::Mammal, 10),
        manifest_row("Red Panda", Category::Mammal, 15),
        manifest_row("Okapi", Category::Mammal, 0),
        manifest_row("Snow Leopard", Category::Mammal, 10),
        manifest_row("Fennec Fox", Category::Mammal, 10),
    };
}

inline const std::vector<std::string> kPlantedMissingWiki{"Mount Nobody", "Untitled Sketch"};
inline const std::vector<std::string> kPlantedFewImages{"Colosseum", "Water Lilies", "Okapi"};
inline const std::vector<std::string> kPlantedAmbiguous{"Mercury"};

inline std::vector<std::string> names_of(const dataset::Manifest& m) {
    std::vector<std::string> out;
    for (const auto& r : m) out.push_back(r.entity_name);
    return out;
}

/// Nine entities in each of three categories with distinct mean views.
inline std::vector<dataset::PopularityInput> tertile_inputs(std::uint64_t seed = 3) {
    std::mt19937_64 rng(seed);
    std::vector<dataset::PopularityInput> out;
    for (Category c : {Category::Bird, Category::Car, Category::Food})
        for (int i = 0; i < 9; ++i) {
            std::string name = std::string(to_string(c)) + "-" + std::to_string(i);
            out.push_back({name, name, c, static_cast<double>(rng() % 100000) + i * 1e-3});
        }
    return out;
}

} // namespace snt::testing

namespace snt::testing {

// All-pairs definition of tau-b, written independently of the library.
inline double tau_b_all_pairs(const std::vector<double>& a, const std::vector<double>& b) {
    const std::size_t n = a.size();
    long long conc = 0, disc = 0, ties_a_only = 0, ties_b_only = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            int sa = (a[i] > a[j]) - (a[i] < a[j]);
            int sb = (b[i] > b[j]) - (b[i] < b[j]);
            if (sa == 0 && sb == 0) continue;
            if (sa == 0) ++ties_a_only;
            else if (sb == 0) ++ties_b_only;
            else if (sa == sb) ++conc;
            else ++disc;
        }
    double denom = std::sqrt(double(conc + disc + ties_a_only) * double(conc + disc + ties_b_only));
    return double(conc - disc) / denom;
}

} // namespace snt::testing
