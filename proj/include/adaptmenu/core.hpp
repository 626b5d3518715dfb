#pragma once

// Data model for linear menus: the label catalog with its association
// relation, menu designs (items and separators), click logs, the user
// state derived from them, and the interaction state that pairs a design
// with a user.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace adaptmenu {

using json = nlohmann::json;

using LabelId = std::int32_t;
inline constexpr LabelId kSeparator = -1;
inline constexpr const char* kSeparatorToken = "---";
inline constexpr int kDefaultMaxSeparators = 8;

struct UnknownLabel : std::out_of_range
{
    explicit UnknownLabel(const std::string& label) : std::out_of_range("unknown label: " + label) {}
};

struct InvalidDesign : std::invalid_argument
{
    using std::invalid_argument::invalid_argument;
};

/*************************************************************************************************/
/// Symmetric boolean relatedness between labels. Every label relates to itself.
class AssociationMatrix
{
public:
    AssociationMatrix() = default;
    explicit AssociationMatrix(std::size_t n) : n_(n), cells_(n * n, 0)
    {
        for (std::size_t i = 0; i < n; ++i) {
            cells_[i * n + i] = 1;
        }
    }

    std::size_t size() const noexcept { return n_; }

    bool related(LabelId a, LabelId b) const
    {
        return cells_[static_cast<std::size_t>(a) * n_ + static_cast<std::size_t>(b)] != 0;
    }

    void relate(LabelId a, LabelId b)
    {
        cells_[static_cast<std::size_t>(a) * n_ + static_cast<std::size_t>(b)] = 1;
        cells_[static_cast<std::size_t>(b) * n_ + static_cast<std::size_t>(a)] = 1;
    }

    bool operator==(const AssociationMatrix&) const = default;

private:
    std::size_t n_ = 0;
    std::vector<std::uint8_t> cells_;
};

/*************************************************************************************************/
/// The fixed label vocabulary of a menu plus the category lists that define
/// its association matrix. Label ids are indices into the sorted name list.
class Catalog
{
public:
    Catalog(std::vector<std::string> names, std::vector<std::vector<std::string>> categories)
        : names_(std::move(names)), categories_(std::move(categories))
    {
        std::sort(names_.begin(), names_.end());
        if (std::adjacent_find(names_.begin(), names_.end()) != names_.end()) {
            throw InvalidDesign("duplicate label");
        }
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (names_[i] == kSeparatorToken) {
                throw InvalidDesign("separator token used as label");
            }
            ids_.emplace(names_[i], static_cast<LabelId>(i));
        }
        relation_ = AssociationMatrix(names_.size());
        for (const auto& category : categories_) {
            std::vector<LabelId> members;
            for (const auto& name : category) {
                // Categories may mention labels that are not on this menu.
                if (auto it = ids_.find(name); it != ids_.end()) {
                    members.push_back(it->second);
                }
            }
            for (LabelId a : members) {
                for (LabelId b : members) {
                    relation_.relate(a, b);
                }
            }
        }
    }

    std::size_t size() const noexcept { return names_.size(); }
    const std::string& name(LabelId id) const { return names_.at(static_cast<std::size_t>(id)); }
    const std::vector<std::string>& names() const noexcept { return names_; }
    const std::vector<std::vector<std::string>>& categories() const noexcept { return categories_; }
    const AssociationMatrix& relation() const noexcept { return relation_; }
    bool related(LabelId a, LabelId b) const { return relation_.related(a, b); }

    std::optional<LabelId> find(const std::string& name) const
    {
        if (auto it = ids_.find(name); it != ids_.end()) {
            return it->second;
        }
        return std::nullopt;
    }

    LabelId id(const std::string& name) const
    {
        if (auto found = find(name)) {
            return *found;
        }
        throw UnknownLabel(name);
    }

    bool operator==(const Catalog& other) const
    {
        return names_ == other.names_ && relation_ == other.relation_;
    }

private:
    std::vector<std::string> names_;
    std::vector<std::vector<std::string>> categories_;
    std::map<std::string, LabelId> ids_;
    AssociationMatrix relation_;
};

using CatalogPtr = std::shared_ptr<const Catalog>;

/*************************************************************************************************/
/// Item/separator position of a label. `item` counts items only and drives
/// every model equation; `row` is the display row including separators.
struct Location
{
    int item = 0;
    int row = 0;
};

/// Ordered entries of a linear menu. Entries are label ids or kSeparator.
/// Immutable once built; adaptations produce new designs.
class MenuDesign
{
public:
    MenuDesign() = default;
    MenuDesign(std::vector<LabelId> entries, CatalogPtr catalog)
        : entries_(std::move(entries)), catalog_(std::move(catalog))
    {
        if (!catalog_) {
            throw InvalidDesign("design without catalog");
        }
        item_index_.assign(catalog_->size(), 0);
        row_index_.assign(catalog_->size(), 0);
        int row = 0;
        for (LabelId e : entries_) {
            ++row;
            if (e == kSeparator) {
                ++separators_;
                continue;
            }
            if (e < 0 || static_cast<std::size_t>(e) >= catalog_->size()) {
                throw InvalidDesign("entry outside catalog");
            }
            items_.push_back(e);
            if (item_index_[static_cast<std::size_t>(e)] != 0) {
                duplicate_ = true;
            }
            item_index_[static_cast<std::size_t>(e)] = static_cast<int>(items_.size());
            row_index_[static_cast<std::size_t>(e)] = row;
        }
    }

    const std::vector<LabelId>& entries() const noexcept { return entries_; }
    const std::vector<LabelId>& items() const noexcept { return items_; }
    const Catalog& catalog() const noexcept { return *catalog_; }
    const CatalogPtr& catalog_ptr() const noexcept { return catalog_; }
    int item_count() const noexcept { return static_cast<int>(items_.size()); }
    int separator_count() const noexcept { return separators_; }
    bool has_duplicates() const noexcept { return duplicate_; }

    /// 1-based item index of a label, 0 when absent.
    int item_index(LabelId label) const noexcept
    {
        if (label < 0 || static_cast<std::size_t>(label) >= item_index_.size()) {
            return 0;
        }
        return item_index_[static_cast<std::size_t>(label)];
    }

    int row_index(LabelId label) const noexcept
    {
        if (label < 0 || static_cast<std::size_t>(label) >= row_index_.size()) {
            return 0;
        }
        return row_index_[static_cast<std::size_t>(label)];
    }

    /// Label at a 1-based item index.
    LabelId item_at(int index) const { return items_.at(static_cast<std::size_t>(index - 1)); }

    bool operator==(const MenuDesign& other) const
    {
        return entries_ == other.entries_
               && (catalog_ == other.catalog_ || (catalog_ && other.catalog_ && *catalog_ == *other.catalog_));
    }

private:
    std::vector<LabelId> entries_;
    CatalogPtr catalog_;
    std::vector<LabelId> items_;
    std::vector<int> item_index_;
    std::vector<int> row_index_;
    int separators_ = 0;
    bool duplicate_ = false;
};

/// First violated invariant, or nullopt when the design is valid.
inline std::optional<std::string> validate_design(const MenuDesign& design,
                                                  int max_separators = kDefaultMaxSeparators)
{
    const auto& entries = design.entries();
    if (design.item_count() == 0) {
        return "empty menu";
    }
    if (entries.front() == kSeparator) {
        return "leading separator";
    }
    if (entries.back() == kSeparator) {
        return "trailing separator";
    }
    for (std::size_t i = 1; i < entries.size(); ++i) {
        if (entries[i] == kSeparator && entries[i - 1] == kSeparator) {
            return "consecutive separators";
        }
    }
    if (design.has_duplicates()) {
        return "duplicate label";
    }
    if (design.separator_count() > max_separators) {
        return "separator budget";
    }
    return std::nullopt;
}

struct Group
{
    LabelId anchor = kSeparator;
    std::vector<LabelId> members;
    int start = 1;  ///< 1-based item index of the anchor
};

/// Separator-delimited groups in menu order.
inline std::vector<Group> groups(const MenuDesign& design)
{
    std::vector<Group> out;
    int item = 0;
    bool open = false;
    for (LabelId e : design.entries()) {
        if (e == kSeparator) {
            open = false;
            continue;
        }
        ++item;
        if (!open) {
            out.push_back(Group{e, {}, item});
            open = true;
        }
        out.back().members.push_back(e);
    }
    return out;
}

inline Location location_of(const MenuDesign& design, LabelId label)
{
    const int item = design.item_index(label);
    if (item == 0) {
        throw UnknownLabel(label >= 0 && static_cast<std::size_t>(label) < design.catalog().size()
                               ? design.catalog().name(label)
                               : std::to_string(label));
    }
    return Location{item, design.row_index(label)};
}

inline Location location_of(const MenuDesign& design, const std::string& label)
{
    auto id = design.catalog().find(label);
    if (!id) {
        throw UnknownLabel(label);
    }
    return location_of(design, *id);
}

/*************************************************************************************************/
/// One recorded selection: label, 1-based item index where it was selected,
/// and the trial counter at which it happened.
struct Click
{
    LabelId label = kSeparator;
    int location = 0;
    std::int64_t time = 0;

    bool operator==(const Click&) const = default;
};

using ClickLog = std::vector<Click>;

struct UserState
{
    ClickLog log;
    std::int64_t now = 0;
    std::vector<double> interest;  ///< indexed by label id
    double decay = 0.5;

    bool operator==(const UserState&) const = default;
};

struct InteractionState
{
    MenuDesign design;
    UserState user;
    MenuDesign expected_design;  ///< the design the user last saw

    bool operator==(const InteractionState&) const = default;
};

/// Normalized click frequencies over the last `window` clicks; uniform over
/// the catalog when the window is empty.
inline std::vector<double> interest_from_log(const ClickLog& log, std::size_t window,
                                             std::size_t n_labels)
{
    std::vector<double> out(n_labels, 0.0);
    const std::size_t begin = log.size() > window ? log.size() - window : 0;
    const std::size_t count = log.size() - begin;
    if (count == 0) {
        if (n_labels > 0) {
            std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(n_labels));
        }
        return out;
    }
    for (std::size_t i = begin; i < log.size(); ++i) {
        out.at(static_cast<std::size_t>(log[i].label)) += 1.0;
    }
    for (double& v : out) {
        v /= static_cast<double>(count);
    }
    return out;
}

inline std::optional<std::string> validate_user(const UserState& user, std::size_t n_labels)
{
    if (!(user.decay > 0.0)) {
        return "decay must be positive";
    }
    if (user.interest.size() != n_labels) {
        return "interest size mismatch";
    }
    double total = 0.0;
    for (double p : user.interest) {
        if (p < 0.0) {
            return "negative interest";
        }
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        return "interest does not sum to 1";
    }
    for (std::size_t i = 0; i < user.log.size(); ++i) {
        if (i > 0 && user.log[i].time <= user.log[i - 1].time) {
            return "click times not strictly increasing";
        }
        if (user.log[i].time > user.now) {
            return "click after current time";
        }
    }
    return std::nullopt;
}

/// Fresh state for a design the user is already looking at.
inline InteractionState make_state(MenuDesign design, UserState user)
{
    InteractionState s{design, std::move(user), design};
    return s;
}

/*************************************************************************************************/
// JSON: {"items": ["label" | "---"], "categories": [["label", ...], ...]}

inline MenuDesign design_from_json(const json& j)
{
    if (!j.is_object() || !j.contains("items") || !j.at("items").is_array()) {
        throw InvalidDesign("design JSON needs an \"items\" array");
    }
    std::vector<std::string> names;
    for (const auto& item : j.at("items")) {
        if (!item.is_string()) {
            throw InvalidDesign("menu entries must be strings");
        }
        if (item.get<std::string>() != kSeparatorToken) {
            names.push_back(item.get<std::string>());
        }
    }
    std::vector<std::vector<std::string>> categories;
    if (j.contains("categories")) {
        categories = j.at("categories").get<std::vector<std::vector<std::string>>>();
    }
    auto catalog = std::make_shared<const Catalog>(names, std::move(categories));
    std::vector<LabelId> entries;
    for (const auto& item : j.at("items")) {
        const auto& s = item.get_ref<const std::string&>();
        entries.push_back(s == kSeparatorToken ? kSeparator : catalog->id(s));
    }
    return MenuDesign(std::move(entries), std::move(catalog));
}

inline json design_to_json(const MenuDesign& design)
{
    json items = json::array();
    for (LabelId e : design.entries()) {
        items.push_back(e == kSeparator ? std::string(kSeparatorToken) : design.catalog().name(e));
    }
    return json{{"items", items}, {"categories", design.catalog().categories()}};
}

/// Same catalog, new entry list given by label names.
inline MenuDesign design_from_labels(const std::vector<std::string>& labels, const CatalogPtr& catalog)
{
    std::vector<LabelId> entries;
    for (const auto& s : labels) {
        entries.push_back(s == kSeparatorToken ? kSeparator : catalog->id(s));
    }
    return MenuDesign(std::move(entries), catalog);
}

inline std::vector<std::string> design_labels(const MenuDesign& design)
{
    std::vector<std::string> out;
    for (LabelId e : design.entries()) {
        out.push_back(e == kSeparator ? std::string(kSeparatorToken) : design.catalog().name(e));
    }
    return out;
}

/// History JSON: {"clicks": ["label", ...] | [{"label": .., "location"?: .., "time"?: ..}],
/// "now"?: int, "session_window"?: int, "decay"?: number}. Missing locations are
/// taken from `design`; missing times are 0, 1, 2, ...
inline UserState user_from_json(const json& j, const MenuDesign& design, std::size_t default_window = 20)
{
    UserState user;
    const auto& catalog = design.catalog();
    std::int64_t next_time = 0;
    if (j.contains("clicks")) {
        for (const auto& c : j.at("clicks")) {
            Click click;
            if (c.is_string()) {
                click.label = catalog.id(c.get<std::string>());
                click.location = location_of(design, click.label).item;
                click.time = next_time;
            } else {
                click.label = catalog.id(c.at("label").get<std::string>());
                click.location = c.contains("location") ? c.at("location").get<int>()
                                                        : location_of(design, click.label).item;
                click.time = c.contains("time") ? c.at("time").get<std::int64_t>() : next_time;
            }
            if (click.location < 1 || click.location > design.item_count()) {
                throw InvalidDesign("click location out of range");
            }
            if (!user.log.empty() && click.time <= user.log.back().time) {
                throw InvalidDesign("click times must be strictly increasing");
            }
            next_time = click.time + 1;
            user.log.push_back(click);
        }
    }
    user.now = j.value("now", next_time);
    user.decay = j.value("decay", 0.5);
    const auto window = j.value("session_window", default_window);
    user.interest = interest_from_log(user.log, window, catalog.size());
    if (auto err = validate_user(user, catalog.size())) {
        throw InvalidDesign("invalid history: " + *err);
    }
    return user;
}

inline json user_to_json(const UserState& user, const Catalog& catalog)
{
    json clicks = json::array();
    for (const auto& c : user.log) {
        clicks.push_back({{"label", catalog.name(c.label)}, {"location", c.location}, {"time", c.time}});
    }
    json interest = json::object();
    for (std::size_t i = 0; i < user.interest.size(); ++i) {
        interest[catalog.name(static_cast<LabelId>(i))] = user.interest[i];
    }
    return json{{"clicks", clicks}, {"now", user.now}, {"decay", user.decay}, {"interest", interest}};
}

}  // namespace adaptmenu
