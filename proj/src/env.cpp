// Copyright 2026 The TreeQ Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "treeq/env.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <sstream>

namespace treeq::env {
namespace {

const std::array<std::string, 6> kCategories = {"mug", "lamp", "shirt", "backpack", "candle",
                                                "headphones"};
const std::array<std::string, 5> kColors = {"red", "blue", "green", "black", "white"};
const std::array<std::string, 3> kSizes = {"small", "medium", "large"};
const std::array<std::string, 3> kPrices = {"under-20", "20-to-50", "over-50"};
constexpr int kDistinctVariants = 5 * 3 * 3;

const std::array<std::string, 3> kCities = {"sf", "nyc", "chicago"};
const std::map<std::string, std::vector<std::string>>& restaurant_table() {
  static const std::map<std::string, std::vector<std::string>> table = {
      {"sf", {"golden-lotus", "harbor-grill", "mission-taqueria", "nopa-bistro"}},
      {"nyc", {"katz-deli", "le-bernardin", "joe-pizza", "tavern-green"}},
      {"chicago", {"alinea", "girl-and-goat", "lou-malnati", "the-publican"}},
  };
  return table;
}
const std::array<std::string, 7> kDates = {"oct-01", "oct-02", "oct-03", "oct-04",
                                           "oct-05", "oct-06", "oct-07"};
const std::array<std::string, 5> kTimes = {"17-00", "18-00", "19-00", "20-00", "21-00"};
const std::array<std::string, 8> kPartySizes = {"1", "2", "3", "4", "5", "6", "7", "8"};
const std::array<std::string, 3> kSeating = {"indoor", "outdoor", "bar"};
const std::array<std::string, 8> kNames = {"alice-chen",  "bob-singh",    "carol-diaz", "dan-okafor",
                                           "erin-walsh", "farid-haddad", "grace-kim",  "hugo-meyer"};
const std::array<std::string, 8> kPhones = {"555-0101", "555-0102", "555-0103", "555-0104",
                                            "555-0105", "555-0106", "555-0107", "555-0108"};
const std::array<std::string, 8> kEmails = {"alice@mail.com", "bob@mail.com",   "carol@mail.com",
                                            "dan@mail.com",   "erin@mail.com",  "farid@mail.com",
                                            "grace@mail.com", "hugo@mail.com"};

template <class Container>
bool contains(const Container& c, const std::string& v) {
  return std::find(c.begin(), c.end(), v) != c.end();
}

template <std::size_t N>
const std::string& pick(Rng& rng, const std::array<std::string, N>& a) {
  return a[rng.below(N)];
}

const std::string& attr(const TaskSpec& t, const std::string& key) {
  auto it = t.target_attributes.find(key);
  if (it == t.target_attributes.end()) {
    throw EnvError("task " + t.task_id + " is missing attribute '" + key + "'");
  }
  return it->second;
}

/// Target value plus (n-1) distinct distractors from the pool, shuffled.
template <std::size_t N>
std::vector<std::string> with_distractors(Rng& rng, const std::array<std::string, N>& pool,
                                          const std::string& target, std::size_t n) {
  std::vector<std::string> others;
  for (const auto& v : pool) {
    if (v != target) others.push_back(v);
  }
  rng.shuffle(others);
  std::vector<std::string> out = {target};
  for (std::size_t i = 0; i + 1 < n && i < others.size(); ++i) out.push_back(others[i]);
  rng.shuffle(out);
  return out;
}

// ------------------------------------------------------------ rendering

InteractiveElement element(std::string id, Role role, std::string label,
                           std::vector<std::string> suggestions = {}) {
  return InteractiveElement{std::move(id), role, std::move(label), std::move(suggestions)};
}

const Product* find_product(const ShopCatalog& catalog, const std::string& id) {
  for (const auto& p : catalog.products) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

std::string shop_query_suggestion(const TaskSpec& t) {
  return attr(t, "color") + " " + attr(t, "size") + " " + attr(t, "category") + " " +
         attr(t, "price");
}

void render_shop(const EnvState& s, const ShopCursor& c, Observation& obs) {
  const auto& inst = *s.instance;
  switch (c.page) {
    case ShopCursor::Page::Landing:
      obs.page_id = "landing";
      obs.text = "welcome to the shop";
      obs.elements.push_back(element("search", Role::TextInput, "search products",
                                     {shop_query_suggestion(inst.task)}));
      break;
    case ShopCursor::Page::Results: {
      const int page_size = inst.task.layout.page_size;
      const auto results = search_results(inst.catalog.products, c.query);
      const int pages = page_count(static_cast<int>(results.size()), page_size);
      obs.page_id = "results-" + std::to_string(c.results_page);
      obs.text = "results page " + std::to_string(c.results_page + 1) + " of " +
                 std::to_string(pages) + " for " + c.query;
      const std::size_t begin = static_cast<std::size_t>(c.results_page) * page_size;
      const std::size_t end = std::min(results.size(), begin + page_size);
      for (std::size_t i = begin; i < end; ++i) {
        obs.elements.push_back(element("item-" + results[i].id, Role::Link, results[i].label()));
      }
      if (c.results_page > 0) obs.elements.push_back(element("prev", Role::Button, "previous page"));
      if (c.results_page + 1 < pages) obs.elements.push_back(element("next", Role::Button, "next page"));
      obs.elements.push_back(element("back", Role::Button, "back to search"));
      break;
    }
    case ShopCursor::Page::Item: {
      const Product* p = find_product(inst.catalog, c.item_id);
      obs.page_id = "item-" + c.item_id;
      obs.text = "product " + p->label();
      obs.elements.push_back(element("buy", Role::Button, "buy " + p->label()));
      obs.elements.push_back(element("back", Role::Button, "back to results"));
      break;
    }
  }
}

std::vector<std::string> results_for(const BookSite& site, const TaskSpec& t, const std::string& city,
                                     const std::string& typed) {
  const auto& in_city = site.restaurants_by_city.at(city);
  const std::string& target = attr(t, "restaurant");
  std::vector<std::string> out;
  if (contains(in_city, typed)) out.push_back(typed);
  for (const auto& r : in_city) {
    if (r == typed || r == target) continue;
    out.push_back(r);
  }
  out.resize(std::min<std::size_t>(out.size(), 3));
  Rng rng(derive_seed(t.layout.seed, "results:" + city + ":" + typed));
  rng.shuffle(out);
  return out;
}

std::string book_page_id(BookPage p) {
  switch (p) {
    case BookPage::Landing: return "landing";
    case BookPage::Location: return "location";
    case BookPage::SearchFilled: return "search";
    case BookPage::Results: return "results";
    case BookPage::Date: return "date";
    case BookPage::Time: return "time";
    case BookPage::FindTable: return "find-table";
    case BookPage::Party: return "party";
    case BookPage::Seating: return "seating";
    case BookPage::Continue: return "continue";
    case BookPage::Name: return "name";
    case BookPage::Phone: return "phone";
    case BookPage::Email: return "email";
    case BookPage::Complete: return "complete";
  }
  return "unknown";
}

void render_book(const EnvState& s, const BookCursor& c, Observation& obs) {
  const auto& site = s.instance->site;
  const auto& task = s.instance->task;
  obs.page_id = book_page_id(c.page);
  auto back = [&] { obs.elements.push_back(element("back", Role::Button, "back")); };
  auto options = [&](const std::string& prefix, const std::string& word,
                     const std::vector<std::string>& values) {
    for (const auto& v : values) obs.elements.push_back(element(prefix + v, Role::Option, word + " " + v));
  };
  switch (c.page) {
    case BookPage::Landing:
      obs.text = "current location " + c.city;
      obs.elements.push_back(element("change-location", Role::Button, "change location from-" + c.city));
      obs.elements.push_back(
          element("restaurant-search", Role::TextInput, "restaurant search near " + c.city, site.search_suggestions));
      break;
    case BookPage::Location:
      obs.text = "choose a city";
      options("city-", "city", site.cities);
      back();
      break;
    case BookPage::SearchFilled:
      obs.text = "search for " + c.typed + " near " + c.city;
      obs.elements.push_back(element("search-go", Role::Submit, "search " + c.typed));
      back();
      break;
    case BookPage::Results:
      obs.text = "restaurants in " + c.city + " for " + c.typed;
      for (const auto& r : results_for(site, task, c.city, c.typed)) {
        obs.elements.push_back(element("rest-" + r, Role::Link, r + " " + c.city));
      }
      back();
      break;
    case BookPage::Date:
      obs.text = "reserve at " + c.restaurant;
      options("date-", "date", site.dates_by_restaurant.at(c.restaurant));
      back();
      break;
    case BookPage::Time:
      obs.text = "choose a time on " + c.date;
      options("time-", "time", site.times);
      back();
      break;
    case BookPage::FindTable:
      obs.text = c.date + " at " + c.time;
      obs.elements.push_back(element("find-table", Role::Submit, "find a table"));
      back();
      break;
    case BookPage::Party:
      obs.text = "how many guests";
      options("party-", "party", site.party_options);
      back();
      break;
    case BookPage::Seating:
      obs.text = "seating preference";
      options("seat-", "seating", site.seating);
      back();
      break;
    case BookPage::Continue:
      obs.text = "table held for party of " + c.party;
      obs.elements.push_back(element("continue", Role::Button, "continue to details"));
      back();
      break;
    case BookPage::Name:
      obs.text = "contact details";
      obs.elements.push_back(element("name", Role::TextInput, "your name", site.name_suggestions));
      back();
      break;
    case BookPage::Phone:
      obs.text = "contact details";
      obs.elements.push_back(element("phone", Role::TextInput, "phone number", site.phone_suggestions));
      back();
      break;
    case BookPage::Email:
      obs.text = "contact details";
      obs.elements.push_back(element("email", Role::TextInput, "email address", site.email_suggestions));
      back();
      break;
    case BookPage::Complete:
      obs.text = "review reservation";
      obs.elements.push_back(element("complete-reservation", Role::Submit, "complete reservation"));
      back();
      break;
  }
}

// ------------------------------------------------------------ dynamics

/// Applies a command to a cursor. Returns an error message for commands the
/// current page cannot execute, leaving the cursor untouched.
std::optional<std::string> apply_shop(const WorldInstance& inst, ShopCursor& c, const EnvCommand& cmd,
                                      bool& terminal) {
  using Page = ShopCursor::Page;
  const int page_size = inst.task.layout.page_size;
  switch (c.page) {
    case Page::Landing:
      if (cmd.verb == Verb::Search) {
        c.page = Page::Results;
        c.query = *cmd.payload;
        c.results_page = 0;
        return std::nullopt;
      }
      break;
    case Page::Results: {
      const auto results = search_results(inst.catalog.products, c.query);
      const int pages = page_count(static_cast<int>(results.size()), page_size);
      switch (cmd.verb) {
        case Verb::Next:
          if (c.results_page + 1 >= pages) return "no next page";
          ++c.results_page;
          return std::nullopt;
        case Verb::Prev:
          if (c.results_page == 0) return "no previous page";
          --c.results_page;
          return std::nullopt;
        case Verb::Back:
          c = ShopCursor{};
          return std::nullopt;
        case Verb::Click: {
          const std::size_t begin = static_cast<std::size_t>(c.results_page) * page_size;
          const std::size_t end = std::min(results.size(), begin + page_size);
          for (std::size_t i = begin; i < end; ++i) {
            if ("item-" + results[i].id == *cmd.target) {
              c.page = Page::Item;
              c.item_id = results[i].id;
              return std::nullopt;
            }
          }
          return "no element " + *cmd.target;
        }
        default:
          break;
      }
      break;
    }
    case Page::Item:
      if (cmd.verb == Verb::Buy) {
        c.bought_id = c.item_id;
        terminal = true;
        return std::nullopt;
      }
      if (cmd.verb == Verb::Back) {
        c.page = Page::Results;
        c.item_id.clear();
        return std::nullopt;
      }
      break;
  }
  return "cannot " + to_string(cmd.verb) + " here";
}

std::optional<std::string> strip_prefix(const std::optional<std::string>& id, const std::string& prefix) {
  if (!id || id->rfind(prefix, 0) != 0) return std::nullopt;
  return id->substr(prefix.size());
}

std::optional<std::string> apply_book(const WorldInstance& inst, BookCursor& c, const EnvCommand& cmd,
                                      bool& terminal) {
  const auto& site = inst.site;
  const bool is_back = cmd.verb == Verb::Back;
  auto click = [&](const std::string& prefix) -> std::optional<std::string> {
    if (cmd.verb != Verb::Click) return std::nullopt;
    return strip_prefix(cmd.target, prefix);
  };
  auto submit = [&](const std::string& id) {
    return cmd.verb == Verb::Submit && cmd.target == id;
  };
  auto type_into = [&](const std::string& id) -> std::optional<std::string> {
    if (cmd.verb != Verb::Type || cmd.target != id) return std::nullopt;
    return cmd.payload;
  };

  switch (c.page) {
    case BookPage::Landing:
      if (cmd.verb == Verb::Click && cmd.target == "change-location") {
        c.page = BookPage::Location;
        return std::nullopt;
      }
      if (auto v = type_into("restaurant-search")) {
        c.typed = *v;
        c.page = BookPage::SearchFilled;
        return std::nullopt;
      }
      break;
    case BookPage::Location:
      if (auto v = click("city-"); v && contains(site.cities, *v)) {
        c.city = *v;
        c.page = BookPage::Landing;
        return std::nullopt;
      }
      if (is_back) {
        c.page = BookPage::Landing;
        return std::nullopt;
      }
      break;
    case BookPage::SearchFilled:
      if (submit("search-go")) {
        c.page = BookPage::Results;
        return std::nullopt;
      }
      if (is_back) {
        c.typed.clear();
        c.page = BookPage::Landing;
        return std::nullopt;
      }
      break;
    case BookPage::Results:
      if (auto v = click("rest-"); v && contains(results_for(site, inst.task, c.city, c.typed), *v)) {
        c.restaurant = *v;
        c.page = BookPage::Date;
        return std::nullopt;
      }
      if (is_back) {
        c.page = BookPage::SearchFilled;
        return std::nullopt;
      }
      break;
    case BookPage::Date:
      if (auto v = click("date-"); v && contains(site.dates_by_restaurant.at(c.restaurant), *v)) {
        c.date = *v;
        c.page = BookPage::Time;
        return std::nullopt;
      }
      if (is_back) {
        c.restaurant.clear();
        c.page = BookPage::Results;
        return std::nullopt;
      }
      break;
    case BookPage::Time:
      if (auto v = click("time-"); v && contains(site.times, *v)) {
        c.time = *v;
        c.page = BookPage::FindTable;
        return std::nullopt;
      }
      if (is_back) {
        c.date.clear();
        c.page = BookPage::Date;
        return std::nullopt;
      }
      break;
    case BookPage::FindTable:
      if (submit("find-table")) {
        c.page = BookPage::Party;
        return std::nullopt;
      }
      if (is_back) {
        c.time.clear();
        c.page = BookPage::Time;
        return std::nullopt;
      }
      break;
    case BookPage::Party:
      if (auto v = click("party-"); v && contains(site.party_options, *v)) {
        c.party = *v;
        c.page = BookPage::Seating;
        return std::nullopt;
      }
      if (is_back) {
        c.page = BookPage::FindTable;
        return std::nullopt;
      }
      break;
    case BookPage::Seating:
      if (auto v = click("seat-"); v && contains(site.seating, *v)) {
        c.seating = *v;
        c.page = BookPage::Continue;
        return std::nullopt;
      }
      if (is_back) {
        c.party.clear();
        c.page = BookPage::Party;
        return std::nullopt;
      }
      break;
    case BookPage::Continue:
      if (cmd.verb == Verb::Click && cmd.target == "continue") {
        c.page = BookPage::Name;
        return std::nullopt;
      }
      if (is_back) {
        c.seating.clear();
        c.page = BookPage::Seating;
        return std::nullopt;
      }
      break;
    case BookPage::Name:
      if (auto v = type_into("name")) {
        c.name = *v;
        c.page = BookPage::Phone;
        return std::nullopt;
      }
      if (is_back) {
        c.page = BookPage::Continue;
        return std::nullopt;
      }
      break;
    case BookPage::Phone:
      if (auto v = type_into("phone")) {
        c.phone = *v;
        c.page = BookPage::Email;
        return std::nullopt;
      }
      if (is_back) {
        c.name.clear();
        c.page = BookPage::Name;
        return std::nullopt;
      }
      break;
    case BookPage::Email:
      if (auto v = type_into("email")) {
        c.email = *v;
        c.page = BookPage::Complete;
        return std::nullopt;
      }
      if (is_back) {
        c.phone.clear();
        c.page = BookPage::Phone;
        return std::nullopt;
      }
      break;
    case BookPage::Complete:
      if (submit("complete-reservation")) {
        c.submitted = true;
        terminal = true;
        return std::nullopt;
      }
      if (is_back) {
        c.email.clear();
        c.page = BookPage::Email;
        return std::nullopt;
      }
      break;
  }
  if (cmd.target) return "cannot " + to_string(cmd.verb) + " " + *cmd.target + " here";
  return "cannot " + to_string(cmd.verb) + " here";
}

BookCursor initial_book_cursor(const TaskSpec& t, const BookSite& site) {
  BookCursor c;
  c.city = site.start_city;
  const int stage = t.layout.start_stage;
  if (stage >= 1) {
    c.city = attr(t, "city");
    c.typed = attr(t, "restaurant");
    c.page = BookPage::Results;
  }
  if (stage >= 2) {
    c.restaurant = attr(t, "restaurant");
    c.page = BookPage::Date;
  }
  if (stage >= 3) {
    c.date = attr(t, "date");
    c.time = attr(t, "time");
    c.page = BookPage::Party;
  }
  if (stage >= 4) {
    c.party = attr(t, "party_size");
    c.page = BookPage::Seating;
  }
  if (stage >= 5) {
    c.seating = site.seating.front();
    c.page = BookPage::Name;
  }
  return c;
}

char tri(const std::string& value, const std::string& target) {
  if (value.empty()) return '-';
  return value == target ? '1' : '0';
}

}  // namespace

// ------------------------------------------------------------ enums

std::string to_string(World w) { return w == World::Shop ? "shopworld" : "bookworld"; }

World world_from_string(const std::string& s) {
  if (s == "shopworld") return World::Shop;
  if (s == "bookworld") return World::Book;
  throw EnvError("unknown world '" + s + "'");
}

std::string to_string(Role r) {
  switch (r) {
    case Role::Button: return "button";
    case Role::Link: return "link";
    case Role::TextInput: return "textinput";
    case Role::Option: return "option";
    case Role::Submit: return "submit";
  }
  return "button";
}

Role role_from_string(const std::string& s) {
  if (s == "button") return Role::Button;
  if (s == "link") return Role::Link;
  if (s == "textinput") return Role::TextInput;
  if (s == "option") return Role::Option;
  if (s == "submit") return Role::Submit;
  throw EnvError("unknown element role '" + s + "'");
}

std::string to_string(Verb v) {
  switch (v) {
    case Verb::Search: return "search";
    case Verb::Click: return "click";
    case Verb::Type: return "type";
    case Verb::Next: return "next";
    case Verb::Prev: return "prev";
    case Verb::Back: return "back";
    case Verb::Buy: return "buy";
    case Verb::Submit: return "submit";
    case Verb::AskUser: return "ask_user";
  }
  return "click";
}

Verb verb_from_string(const std::string& s) {
  static const std::map<std::string, Verb> table = {
      {"search", Verb::Search}, {"click", Verb::Click}, {"type", Verb::Type},
      {"next", Verb::Next},     {"prev", Verb::Prev},   {"back", Verb::Back},
      {"buy", Verb::Buy},       {"submit", Verb::Submit}, {"ask_user", Verb::AskUser},
  };
  auto it = table.find(s);
  if (it == table.end()) throw EnvError("unknown verb '" + s + "'");
  return it->second;
}

// ------------------------------------------------------------ commands

void validate(const EnvCommand& cmd) {
  const bool needs_payload = cmd.verb == Verb::Search || cmd.verb == Verb::Type;
  const bool needs_target = cmd.verb == Verb::Click || cmd.verb == Verb::Type || cmd.verb == Verb::Submit;
  const std::string name = to_string(cmd.verb);
  if (needs_payload && (!cmd.payload || cmd.payload->empty())) {
    throw EnvError("malformed command: " + name + " requires a payload");
  }
  if (!needs_payload && cmd.payload && cmd.verb != Verb::AskUser) {
    throw EnvError("malformed command: " + name + " takes no payload");
  }
  if (needs_target && (!cmd.target || cmd.target->empty())) {
    throw EnvError("malformed command: " + name + " requires a target");
  }
  if (!needs_target && cmd.target) {
    throw EnvError("malformed command: " + name + " takes no target");
  }
  if (cmd.target && cmd.target->find(' ') != std::string::npos) {
    throw EnvError("malformed command: target contains whitespace");
  }
}

std::string canonical(const EnvCommand& cmd) {
  std::string out = to_string(cmd.verb);
  if (cmd.target) out += " " + *cmd.target;
  if (cmd.payload) out += " " + *cmd.payload;
  return out;
}

EnvCommand parse_command(const std::string& text) {
  const auto space = text.find(' ');
  EnvCommand cmd;
  cmd.verb = verb_from_string(text.substr(0, space));
  const std::string rest = space == std::string::npos ? "" : text.substr(space + 1);
  switch (cmd.verb) {
    case Verb::Click:
    case Verb::Submit:
      cmd.target = rest;
      break;
    case Verb::Search:
      cmd.payload = rest;
      break;
    case Verb::Type: {
      const auto s2 = rest.find(' ');
      if (s2 == std::string::npos) throw EnvError("malformed command: '" + text + "'");
      cmd.target = rest.substr(0, s2);
      cmd.payload = rest.substr(s2 + 1);
      break;
    }
    case Verb::AskUser:
      if (!rest.empty()) cmd.payload = rest;
      break;
    default:
      if (!rest.empty()) throw EnvError("malformed command: '" + text + "'");
  }
  validate(cmd);
  return cmd;
}

std::string canonical(const Observation& obs) {
  std::ostringstream out;
  out << "kind: " << (obs.kind == ObsKind::UserQuery ? "user_query" : "page") << '\n';
  out << "task: " << obs.task_id << '\n';
  out << "page: " << obs.page_id << '\n';
  out << "text: " << obs.text << '\n';
  for (const auto& e : obs.elements) {
    out << '[' << to_string(e.role) << "] " << e.element_id << ": " << e.label;
    if (!e.suggestions.empty()) {
      out << " {";
      for (std::size_t i = 0; i < e.suggestions.size(); ++i) {
        if (i) out << '|';
        out << e.suggestions[i];
      }
      out << '}';
    }
    out << '\n';
  }
  return out.str();
}

// ------------------------------------------------------------ tasks

void validate(const TaskSpec& t) {
  if (t.task_id.empty()) throw EnvError("malformed task: empty task_id");
  const auto& L = t.layout;
  if (L.horizon < 1) throw EnvError("malformed task " + t.task_id + ": horizon must be >= 1");
  auto require_in = [&](const std::string& key, const auto& pool) {
    if (!contains(pool, attr(t, key))) {
      throw EnvError("malformed task " + t.task_id + ": bad value for '" + key + "'");
    }
  };
  if (t.world == World::Shop) {
    require_in("category", kCategories);
    require_in("color", kColors);
    require_in("size", kSizes);
    require_in("price", kPrices);
    if (L.page_size < 1 || L.result_count < 1 || L.result_count > L.catalog_size ||
        L.result_count > kDistinctVariants || L.target_rank < 0 || L.target_rank >= L.result_count) {
      throw EnvError("malformed task " + t.task_id + ": inconsistent shop layout");
    }
  } else {
    require_in("city", kCities);
    require_in("start_city", kCities);
    require_in("restaurant", restaurant_table().at(attr(t, "city")));
    require_in("date", kDates);
    require_in("time", kTimes);
    require_in("party_size", kPartySizes);
    require_in("name", kNames);
    require_in("phone", kPhones);
    require_in("email", kEmails);
    if (L.start_stage < 0 || L.start_stage > 5) {
      throw EnvError("malformed task " + t.task_id + ": start_stage out of range");
    }
  }
}

std::string Product::label() const { return color + " " + size + " " + category + " " + price; }

ShopCatalog build_catalog(const TaskSpec& t) {
  const auto& L = t.layout;
  Rng rng(derive_seed(L.seed, "catalog"));
  const std::string& category = attr(t, "category");
  struct Variant {
    std::string color, size, price;
  };
  std::vector<Variant> variants;
  for (const auto& c : kColors)
    for (const auto& s : kSizes)
      for (const auto& p : kPrices) {
        if (c == attr(t, "color") && s == attr(t, "size") && p == attr(t, "price")) continue;
        variants.push_back({c, s, p});
      }
  rng.shuffle(variants);

  std::vector<int> ids(static_cast<std::size_t>(L.catalog_size));
  for (int i = 0; i < L.catalog_size; ++i) ids[static_cast<std::size_t>(i)] = i;
  rng.shuffle(ids);
  auto product_id = [&](std::size_t k) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "p%03d", ids[k]);
    return std::string(buf);
  };

  ShopCatalog cat;
  std::size_t next_id = 0;
  std::size_t next_variant = 0;
  for (int rank = 0; rank < L.result_count; ++rank) {
    Product p;
    p.id = product_id(next_id++);
    p.category = category;
    if (rank == L.target_rank) {
      p.color = attr(t, "color");
      p.size = attr(t, "size");
      p.price = attr(t, "price");
    } else {
      const auto& v = variants[next_variant++];
      p.color = v.color;
      p.size = v.size;
      p.price = v.price;
    }
    p.popularity = 1000 - rank;
    cat.products.push_back(std::move(p));
  }
  std::vector<std::string> other_categories;
  for (const auto& c : kCategories) {
    if (c != category) other_categories.push_back(c);
  }
  for (int i = L.result_count; i < L.catalog_size; ++i) {
    Product p;
    p.id = product_id(next_id++);
    p.category = other_categories[rng.below(other_categories.size())];
    p.color = pick(rng, kColors);
    p.size = pick(rng, kSizes);
    p.price = pick(rng, kPrices);
    p.popularity = static_cast<int>(rng.below(1000));
    cat.products.push_back(std::move(p));
  }
  std::sort(cat.products.begin(), cat.products.end(),
            [](const Product& a, const Product& b) { return a.id < b.id; });
  return cat;
}

std::vector<Product> search_results(std::span<const Product> catalog, const std::string& query) {
  const auto tokens = split_tokens(query);
  std::vector<Product> out;
  for (const auto& p : catalog) {
    if (contains(tokens, p.category)) out.push_back(p);
  }
  std::sort(out.begin(), out.end(), [](const Product& a, const Product& b) {
    if (a.popularity != b.popularity) return a.popularity > b.popularity;
    return a.id < b.id;
  });
  return out;
}

int page_count(int result_count, int page_size) {
  if (result_count <= 0) return 1;
  return (result_count + page_size - 1) / page_size;
}

std::vector<Product> shopworld_paginate(std::span<const Product> catalog, const std::string& query, int page,
                                        int page_size) {
  if (page_size < 1) throw EnvError("page size must be positive");
  const auto results = search_results(catalog, query);
  const int pages = page_count(static_cast<int>(results.size()), page_size);
  if (page < 0 || page >= pages) {
    throw EnvError("page " + std::to_string(page) + " out of range (" + std::to_string(pages) + " pages)");
  }
  const auto begin = results.begin() + static_cast<std::ptrdiff_t>(page) * page_size;
  const auto end = results.begin() + std::min<std::ptrdiff_t>(results.size(),
                                                              static_cast<std::ptrdiff_t>(page + 1) * page_size);
  return {begin, end};
}

BookSite build_site(const TaskSpec& t) {
  Rng rng(derive_seed(t.layout.seed, "site"));
  BookSite site;
  site.cities.assign(kCities.begin(), kCities.end());
  rng.shuffle(site.cities);
  site.restaurants_by_city = restaurant_table();
  const std::string& target_restaurant = attr(t, "restaurant");
  const std::string& target_date = attr(t, "date");
  for (const auto& [city, restaurants] : restaurant_table()) {
    for (const auto& r : restaurants) {
      if (r == target_restaurant) {
        site.dates_by_restaurant[r] = with_distractors(rng, kDates, target_date, 4);
      } else {
        std::vector<std::string> pool;
        for (const auto& d : kDates) {
          if (d != target_date) pool.push_back(d);
        }
        rng.shuffle(pool);
        pool.resize(4);
        std::sort(pool.begin(), pool.end());
        site.dates_by_restaurant[r] = pool;
      }
    }
  }
  site.times = with_distractors(rng, kTimes, attr(t, "time"), 4);
  site.party_options = with_distractors(rng, kPartySizes, attr(t, "party_size"), 4);
  site.seating.assign(kSeating.begin(), kSeating.end());
  rng.shuffle(site.seating);
  std::array<std::string, 12> all_restaurants;
  std::size_t k = 0;
  for (const auto& [city, restaurants] : restaurant_table()) {
    for (const auto& r : restaurants) all_restaurants[k++] = r;
  }
  site.search_suggestions = with_distractors(rng, all_restaurants, target_restaurant, 3);
  site.name_suggestions = with_distractors(rng, kNames, attr(t, "name"), 3);
  site.phone_suggestions = with_distractors(rng, kPhones, attr(t, "phone"), 3);
  site.email_suggestions = with_distractors(rng, kEmails, attr(t, "email"), 3);
  site.start_city = attr(t, "start_city");
  return site;
}

int stage_of(BookPage p) {
  switch (p) {
    case BookPage::Landing:
    case BookPage::Location:
    case BookPage::SearchFilled:
      return 0;
    case BookPage::Results:
      return 1;
    case BookPage::Date:
    case BookPage::Time:
    case BookPage::FindTable:
      return 2;
    case BookPage::Party:
      return 3;
    case BookPage::Seating:
    case BookPage::Continue:
      return 4;
    default:
      return 5;
  }
}

std::vector<TaskSpec> generate_task_set(World world, int count, std::uint64_t seed, const EnvConfig& config) {
  if (count < 1) throw ConfigError("task count must be >= 1");
  std::vector<TaskSpec> tasks;
  tasks.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    TaskSpec t;
    t.world = world;
    char id[48];
    std::snprintf(id, sizeof id, "%s-%llu-%04d", world == World::Shop ? "shop" : "book",
                  static_cast<unsigned long long>(seed), i);
    t.task_id = id;
    t.layout.seed = rng.next_u64();
    if (world == World::Shop) {
      const auto& cfg = config.shop;
      auto& a = t.target_attributes;
      a["category"] = pick(rng, kCategories);
      a["color"] = pick(rng, kColors);
      a["size"] = pick(rng, kSizes);
      a["price"] = pick(rng, kPrices);
      t.goal_text = "find " + a["color"] + " " + a["size"] + " " + a["category"] + " " + a["price"];
      t.layout.horizon = cfg.horizon;
      t.layout.page_size = cfg.page_size;
      t.layout.catalog_size = cfg.catalog_size;
      const int hi = std::min({cfg.catalog_size, cfg.page_size * cfg.max_pages, kDistinctVariants});
      int lo = std::min(cfg.page_size + 1, hi);
      if (lo < 1) lo = 1;
      t.layout.result_count = lo + static_cast<int>(rng.below(static_cast<std::size_t>(hi - lo + 1)));
      const int R = t.layout.result_count;
      const bool deep = rng.bernoulli(cfg.p_deep) && R > cfg.page_size;
      if (deep) {
        t.layout.target_rank = cfg.page_size + static_cast<int>(rng.below(static_cast<std::size_t>(R - cfg.page_size)));
      } else {
        t.layout.target_rank = static_cast<int>(rng.below(static_cast<std::size_t>(std::min(cfg.page_size, R))));
      }
    } else {
      const auto& cfg = config.book;
      auto& a = t.target_attributes;
      a["city"] = pick(rng, kCities);
      const auto& in_city = restaurant_table().at(a["city"]);
      a["restaurant"] = in_city[rng.below(in_city.size())];
      a["date"] = pick(rng, kDates);
      a["time"] = pick(rng, kTimes);
      a["party_size"] = pick(rng, kPartySizes);
      a["name"] = pick(rng, kNames);
      a["phone"] = pick(rng, kPhones);
      a["email"] = pick(rng, kEmails);
      if (rng.bernoulli(cfg.p_city_change)) {
        std::vector<std::string> others;
        for (const auto& c : kCities) {
          if (c != a["city"]) others.push_back(c);
        }
        a["start_city"] = others[rng.below(others.size())];
      } else {
        a["start_city"] = a["city"];
      }
      t.goal_text = "book " + a["restaurant"] + " in " + a["city"] + " on " + a["date"] + " at " + a["time"] +
                    " for " + a["party_size"] + " name " + a["name"] + " phone " + a["phone"] + " email " +
                    a["email"];
      t.layout.horizon = cfg.horizon;
      t.layout.start_stage = cfg.start_stage;
    }
    tasks.push_back(std::move(t));
  }
  return tasks;
}

std::pair<std::vector<TaskSpec>, std::vector<TaskSpec>> split_tasks(const std::vector<TaskSpec>& tasks,
                                                                    std::size_t train_count) {
  if (train_count > tasks.size()) throw ConfigError("train split larger than task set");
  const auto mid = tasks.begin() + static_cast<std::ptrdiff_t>(train_count);
  return {std::vector<TaskSpec>(tasks.begin(), mid), std::vector<TaskSpec>(mid, tasks.end())};
}

std::vector<std::string> attribute_vocabulary(World world) {
  std::vector<std::string> v;
  auto add = [&](const auto& a) { v.insert(v.end(), a.begin(), a.end()); };
  if (world == World::Shop) {
    add(kCategories);
    add(kColors);
    add(kSizes);
    add(kPrices);
  } else {
    add(kCities);
    for (const auto& [city, rs] : restaurant_table()) add(rs);
    add(kDates);
    add(kTimes);
    add(kPartySizes);
    add(kSeating);
    add(kNames);
    add(kPhones);
    add(kEmails);
  }
  return v;
}

// ------------------------------------------------------------ episode

std::pair<EnvState, Observation> env_reset(World world, const TaskSpec& task, std::uint64_t seed) {
  if (world != task.world) {
    throw EnvError("task " + task.task_id + " belongs to " + to_string(task.world) + ", not " + to_string(world));
  }
  validate(task);
  auto inst = std::make_shared<WorldInstance>();
  inst->task = task;
  EnvState s;
  s.seed = seed;
  if (world == World::Shop) {
    inst->catalog = build_catalog(task);
    s.cursor = ShopCursor{};
  } else {
    inst->site = build_site(task);
    s.cursor = initial_book_cursor(task, inst->site);
  }
  s.instance = std::move(inst);
  Observation obs = render(s);
  return {std::move(s), std::move(obs)};
}

Observation render(const EnvState& s) {
  Observation obs;
  obs.task_id = s.task().task_id;
  if (const auto* c = std::get_if<ShopCursor>(&s.cursor)) {
    render_shop(s, *c, obs);
  } else {
    render_book(s, std::get<BookCursor>(s.cursor), obs);
  }
  if (s.step_count == 0) {
    obs.kind = ObsKind::UserQuery;
    obs.text = s.task().goal_text;
  }
  if (!s.banner.empty()) {
    const bool notice = s.banner.rfind("notice:", 0) == 0;
    obs.elements.push_back(element(notice ? "notice" : "error", Role::Button, s.banner));
  }
  return obs;
}

StepResult env_step(const EnvState& state, const EnvCommand& cmd) {
  if (state.terminal) throw EnvError("cannot step a terminal state");
  validate(cmd);
  StepResult r;
  r.state = state;
  EnvState& s = r.state;
  s.banner.clear();
  bool terminal = false;
  std::optional<std::string> error;
  if (cmd.verb == Verb::AskUser) {
    s.banner = "notice: user acknowledged";
  } else if (auto* c = std::get_if<ShopCursor>(&s.cursor)) {
    ShopCursor next = *c;
    error = apply_shop(*s.instance, next, cmd, terminal);
    if (!error) *c = next;
  } else {
    auto& bc = std::get<BookCursor>(s.cursor);
    BookCursor next = bc;
    error = apply_book(*s.instance, next, cmd, terminal);
    if (!error) bc = next;
  }
  if (error) s.banner = "error: " + *error;
  ++s.step_count;
  if (s.step_count >= s.horizon()) terminal = true;
  s.terminal = terminal;
  r.terminal = terminal;
  r.reward = terminal && success(s) ? 1 : 0;
  r.observation = render(s);
  return r;
}

std::vector<EnvCommand> candidate_commands(const Observation& obs) {
  std::vector<EnvCommand> out;
  for (const auto& e : obs.elements) {
    if (e.element_id == "error" || e.element_id == "notice") continue;
    switch (e.role) {
      case Role::TextInput:
        for (const auto& s : e.suggestions) {
          if (e.element_id == "search") {
            out.push_back({Verb::Search, std::nullopt, s});
          } else {
            out.push_back({Verb::Type, e.element_id, s});
          }
        }
        break;
      case Role::Submit:
        out.push_back({Verb::Submit, e.element_id, std::nullopt});
        break;
      default:
        if (e.element_id == "next") {
          out.push_back({Verb::Next, std::nullopt, std::nullopt});
        } else if (e.element_id == "prev") {
          out.push_back({Verb::Prev, std::nullopt, std::nullopt});
        } else if (e.element_id == "back") {
          out.push_back({Verb::Back, std::nullopt, std::nullopt});
        } else if (e.element_id == "buy") {
          out.push_back({Verb::Buy, std::nullopt, std::nullopt});
        } else {
          out.push_back({Verb::Click, e.element_id, std::nullopt});
        }
    }
  }
  return out;
}

bool success(const EnvState& s) {
  const TaskSpec& t = s.task();
  if (const auto* c = std::get_if<ShopCursor>(&s.cursor)) {
    if (c->bought_id.empty()) return false;
    const Product* p = find_product(s.instance->catalog, c->bought_id);
    return p && p->category == attr(t, "category") && p->color == attr(t, "color") &&
           p->size == attr(t, "size") && p->price == attr(t, "price");
  }
  const auto& c = std::get<BookCursor>(s.cursor);
  const bool date_time = c.date == attr(t, "date") && c.time == attr(t, "time");
  const bool party = c.party == attr(t, "party_size");
  const bool contact = c.name == attr(t, "name") && c.phone == attr(t, "phone") && c.email == attr(t, "email");
  return date_time && party && contact && c.submitted;
}

std::string state_key(const EnvState& s) {
  std::ostringstream out;
  if (const auto* c = std::get_if<ShopCursor>(&s.cursor)) {
    out << "shop|" << static_cast<int>(c->page) << '|' << c->results_page << '|' << c->query << '|' << c->item_id
        << '|' << c->bought_id;
  } else {
    const auto& b = std::get<BookCursor>(s.cursor);
    out << "book|" << book_page_id(b.page) << '|' << b.city << '|' << b.typed << '|' << b.restaurant << '|' << b.date
        << '|' << b.time << '|' << b.party << '|' << b.seating << '|' << b.name << '|' << b.phone << '|' << b.email
        << '|' << b.submitted;
  }
  out << "|t" << s.step_count << (s.terminal ? "|T" : "");
  return out.str();
}

std::string abstract_key(const EnvState& s) {
  const TaskSpec& t = s.task();
  std::string key;
  if (const auto* c = std::get_if<ShopCursor>(&s.cursor)) {
    key = "shop|" + std::to_string(static_cast<int>(c->page)) + '|' + std::to_string(c->results_page) + '|' + c->query;
    if (c->page == ShopCursor::Page::Item) {
      const Product* p = find_product(s.instance->catalog, c->item_id);
      const bool ok = p->color == attr(t, "color") && p->size == attr(t, "size") && p->price == attr(t, "price") &&
                      p->category == attr(t, "category");
      key += ok ? "|I1" : "|I0";
    }
    if (!c->bought_id.empty()) key += success(s) ? "|B1" : "|B0";
  } else {
    const auto& b = std::get<BookCursor>(s.cursor);
    key = "book|" + book_page_id(b.page) + '|';
    key += b.city == attr(t, "city") ? '1' : '0';
    key += tri(b.typed, attr(t, "restaurant"));
    key += tri(b.restaurant, attr(t, "restaurant"));
    key += tri(b.date, attr(t, "date"));
    key += tri(b.time, attr(t, "time"));
    key += tri(b.party, attr(t, "party_size"));
    key += b.seating.empty() ? '-' : 's';
    key += tri(b.name, attr(t, "name"));
    key += tri(b.phone, attr(t, "phone"));
    key += tri(b.email, attr(t, "email"));
    key += b.submitted ? 'S' : '.';
  }
  if (s.terminal) key += "|T";
  return key;
}

int judge_commands(const TaskSpec& task, std::span<const EnvCommand> commands) {
  auto [state, obs] = env_reset(task.world, task, 0);
  for (const auto& cmd : commands) {
    if (state.terminal) throw EnvError("trajectory continues past a terminal state");
    state = env_step(state, cmd).state;
  }
  if (!state.terminal) throw EnvError("cannot judge a non-terminal trajectory");
  return success(state) ? 1 : 0;
}

}  // namespace treeq::env
