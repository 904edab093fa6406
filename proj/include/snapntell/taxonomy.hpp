#pragma once

#include <array>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>

#include "error.hpp"

namespace snt {

/// The closed set of 22 entity categories.
enum class Category {
    Landmark, Painting, Sculpture, Food, Fruit, Vegetable, Mammal, Amphibian,
    Insect, Fish, Bird, Reptile, Celebrity, Instrument, Plant, Electronics,
    Tool, Transportation, Sport, Book, Household, Car,
};

inline constexpr std::array<std::string_view, 22> kCategoryNames = {
    "landmark", "painting", "sculpture",  "food",        "fruit",  "vegetable",
    "mammal",   "amphibian", "insect",    "fish",        "bird",   "reptile",
    "celebrity", "instrument", "plant",   "electronics", "tool",   "transportation",
    "sport",    "book",      "household", "car",
};

constexpr std::string_view to_string(Category c) noexcept {
    return kCategoryNames[static_cast<std::size_t>(c)];
}

inline std::optional<Category> try_parse_category(std::string_view s) {
    for (std::size_t i = 0; i < kCategoryNames.size(); ++i)
        if (kCategoryNames[i] == s) return static_cast<Category>(i);
    return std::nullopt;
}

inline Category parse_category(std::string_view s) {
    if (auto c = try_parse_category(s)) return *c;
    throw Error(ErrorKind::ParseError, "unknown category '" + std::string(s) + "'");
}

enum class QuestionType { Static, Narrative, Dynamic, Procedural, Subjective };

inline constexpr std::array<std::string_view, 5> kQuestionTypeNames = {
    "Static", "Narrative", "Dynamic", "Procedural", "Subjective"};

constexpr std::string_view to_string(QuestionType q) noexcept {
    return kQuestionTypeNames[static_cast<std::size_t>(q)];
}

inline QuestionType parse_question_type(std::string_view s) {
    for (std::size_t i = 0; i < kQuestionTypeNames.size(); ++i) {
        auto name = kQuestionTypeNames[i];
        bool eq = name.size() == s.size();
        for (std::size_t k = 0; eq && k < s.size(); ++k)
            eq = std::tolower(static_cast<unsigned char>(name[k])) ==
                 std::tolower(static_cast<unsigned char>(s[k]));
        if (eq) return static_cast<QuestionType>(i);
    }
    throw Error(ErrorKind::ParseError, "unknown question type '" + std::string(s) + "'");
}

enum class PopularityBucket { Head, Torso, Tail, Unassigned };

inline constexpr std::array<std::string_view, 4> kBucketNames = {"Head", "Torso", "Tail",
                                                                  "Unassigned"};

constexpr std::string_view to_string(PopularityBucket b) noexcept {
    return kBucketNames[static_cast<std::size_t>(b)];
}

inline PopularityBucket parse_bucket(std::string_view s) {
    for (std::size_t i = 0; i < kBucketNames.size(); ++i)
        if (kBucketNames[i] == s) return static_cast<PopularityBucket>(i);
    throw Error(ErrorKind::ParseError, "unknown bucket '" + std::string(s) + "'");
}

} // namespace snt
