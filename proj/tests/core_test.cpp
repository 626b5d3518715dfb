#include "support.hpp"

#include <adaptmenu/workload.hpp>

#include <gtest/gtest.h>

using namespace adaptmenu;
using testsupport::menu;

TEST(ValidateDesign, AcceptsMinimalMenu)
{
    EXPECT_FALSE(validate_design(menu({"a", "b"})).has_value());
}

TEST(ValidateDesign, RejectsLeadingSeparator)
{
    auto err = validate_design(menu({"|", "a"}));
    ASSERT_TRUE(err.has_value());
    EXPECT_NE(err->find("leading separator"), std::string::npos);
}

TEST(ValidateDesign, RejectsTrailingAndDoubleSeparators)
{
    EXPECT_TRUE(validate_design(menu({"a", "|"})).has_value());
    EXPECT_TRUE(validate_design(menu({"a", "|", "|", "b"})).has_value());
}

TEST(ValidateDesign, SeparatorBudget)
{
    std::vector<std::string> entries{"i0"};
    for (int k = 1; k <= 9; ++k) {
        entries.push_back("|");
        entries.push_back("i" + std::to_string(k));
    }
    auto err = validate_design(menu(entries), 8);
    ASSERT_TRUE(err.has_value());
    EXPECT_NE(err->find("separator budget"), std::string::npos);
    EXPECT_FALSE(validate_design(menu(entries), 9).has_value());
}

TEST(ValidateDesign, EmptyMenuIsInvalid)
{
    EXPECT_TRUE(validate_design(menu({})).has_value());
}

TEST(Groups, PartitionsAtSeparators)
{
    const auto d = menu({"a", "b", "|", "c"});
    const auto g = groups(d);
    ASSERT_EQ(g.size(), 2u);
    EXPECT_EQ(g[0].anchor, d.catalog().id("a"));
    EXPECT_EQ(g[0].members, (std::vector<LabelId>{d.catalog().id("a"), d.catalog().id("b")}));
    EXPECT_EQ(g[0].start, 1);
    EXPECT_EQ(g[1].anchor, d.catalog().id("c"));
    EXPECT_EQ(g[1].start, 3);
}

TEST(Groups, SingletonAndAllSeparated)
{
    EXPECT_EQ(groups(menu({"a"})).size(), 1u);
    const auto g = groups(menu({"a", "|", "b", "|", "c"}));
    ASSERT_EQ(g.size(), 3u);
    for (const auto& x : g) {
        EXPECT_EQ(x.members.size(), 1u);
    }
}

TEST(LocationOf, CountsItemsOnly)
{
    const auto d = menu({"a", "b", "|", "c"});
    EXPECT_EQ(location_of(d, "c").item, 3);
    EXPECT_EQ(location_of(d, "c").row, 4);
    EXPECT_EQ(location_of(menu({"a"}), "a").item, 1);
    EXPECT_THROW(location_of(menu({"a"}), "z"), UnknownLabel);
}

TEST(Catalog, CategoriesDefineRelatedness)
{
    const auto d = menu({"copy", "paste", "zoom"}, {{"copy", "paste"}, {"zoom", "elsewhere"}});
    const auto& c = d.catalog();
    EXPECT_TRUE(c.related(c.id("copy"), c.id("paste")));
    EXPECT_TRUE(c.related(c.id("paste"), c.id("copy")));
    EXPECT_FALSE(c.related(c.id("copy"), c.id("zoom")));
    EXPECT_TRUE(c.related(c.id("zoom"), c.id("zoom")));
}

TEST(Catalog, RejectsDuplicateLabels)
{
    EXPECT_THROW(menu({"a", "a"}), InvalidDesign);
}

TEST(DesignJson, RejectsMissingItems)
{
    EXPECT_THROW(design_from_json(json{{"categories", json::array()}}), InvalidDesign);
}

TEST(Interest, FrequencyOverWindow)
{
    const auto d = menu({"a", "b", "c"});
    const LabelId a = d.catalog().id("a"), b = d.catalog().id("b");
    ClickLog log{{a, 1, 0}, {a, 1, 1}, {b, 2, 2}};
    auto p = interest(log, 20, 3);
    EXPECT_DOUBLE_EQ(p[static_cast<std::size_t>(a)], 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(p[static_cast<std::size_t>(b)], 1.0 / 3.0);

    auto u = interest({}, 20, 3);
    for (double x : u) {
        EXPECT_DOUBLE_EQ(x, 1.0 / 3.0);
    }

    ClickLog many;
    for (int t = 0; t < 20; ++t) {
        many.push_back({a, 1, t});
    }
    EXPECT_DOUBLE_EQ(interest(many, 20, 3)[static_cast<std::size_t>(a)], 1.0);
}

TEST(Interest, OnlyLastWindowCounts)
{
    const LabelId a = 0, b = 1;
    ClickLog log{{a, 1, 0}, {a, 1, 1}, {b, 2, 2}, {b, 2, 3}};
    auto p = interest(log, 2, 2);
    EXPECT_DOUBLE_EQ(p[0], 0.0);
    EXPECT_DOUBLE_EQ(p[1], 1.0);
}

TEST(UserJson, ClicksByLabelAdvanceTime)
{
    const auto d = menu({"a", "b"});
    const auto u = user_from_json(json{{"clicks", {"a", "b", "a"}}}, d);
    ASSERT_EQ(u.log.size(), 3u);
    EXPECT_EQ(u.now, 3);
    EXPECT_EQ(u.log[1].location, 2);
    EXPECT_DOUBLE_EQ(u.interest[static_cast<std::size_t>(d.catalog().id("a"))], 2.0 / 3.0);
    EXPECT_THROW(user_from_json(json{{"clicks", {"zz"}}}, d), UnknownLabel);
}

/*************************************************************************************************/
// Properties over random designs.

TEST(DesignProperty, GroupsConcatenateToItems)
{
    Rng rng(11);
    RecordProperty("cases", testsupport::kCases);
    for (int trial = 0; trial < testsupport::kCases; ++trial) {
        const auto d = testsupport::random_small_design(1 + static_cast<int>(rng.index(20)), rng);
        std::vector<LabelId> joined;
        for (const auto& g : groups(d)) {
            ASSERT_EQ(g.anchor, g.members.front());
            ASSERT_EQ(g.start, static_cast<int>(joined.size()) + 1);
            joined.insert(joined.end(), g.members.begin(), g.members.end());
        }
        ASSERT_EQ(joined, d.items());
    }
}

TEST(DesignProperty, LocationIsBijection)
{
    Rng rng(12);
    RecordProperty("cases", testsupport::kCases);
    for (int trial = 0; trial < testsupport::kCases; ++trial) {
        const auto d = testsupport::random_small_design(1 + static_cast<int>(rng.index(20)), rng);
        std::vector<int> seen(static_cast<std::size_t>(d.item_count()) + 1, 0);
        for (LabelId l : d.items()) {
            const int k = location_of(d, l).item;
            ASSERT_GE(k, 1);
            ASSERT_LE(k, d.item_count());
            ASSERT_EQ(d.item_at(k), l);
            ++seen[static_cast<std::size_t>(k)];
        }
        for (std::size_t k = 1; k < seen.size(); ++k) {
            ASSERT_EQ(seen[k], 1);
        }
    }
}

TEST(DesignProperty, JsonRoundTrip)
{
    Rng rng(13);
    RecordProperty("cases", testsupport::kCases);
    for (int trial = 0; trial < testsupport::kCases; ++trial) {
        const auto d = trial % 2 == 0 ? testsupport::random_small_design(1 + static_cast<int>(rng.index(20)), rng)
                                      : random_design(1 + static_cast<int>(rng.index(20)), rng);
        ASSERT_FALSE(validate_design(d).has_value());
        const auto back = design_from_json(json::parse(design_to_json(d).dump()));
        ASSERT_EQ(design_labels(back), design_labels(d));
        ASSERT_EQ(back.catalog().relation(), d.catalog().relation());
    }
}

TEST(Rng, SameSeedSameStream)
{
    Rng a(5), b(5), c(6);
    bool differs = false;
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next();
        ASSERT_EQ(x, b.next());
        differs |= x != c.next();
    }
    EXPECT_TRUE(differs);
}

TEST(Rng, WeightedNeverPicksZeroWeight)
{
    Rng rng(3);
    std::vector<double> w{0.0, 1.0, 0.0, 3.0};
    for (int i = 0; i < 1000; ++i) {
        const auto k = rng.weighted(w);
        ASSERT_TRUE(k == 1 || k == 3);
    }
}
