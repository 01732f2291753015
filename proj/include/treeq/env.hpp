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

// Simulated web environments: a paged product-search site ("shopworld") and
// a multi-stage restaurant booking site ("bookworld"). Both are
// deterministic; stepping returns a new EnvState value and never mutates.

#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "treeq/common.hpp"

namespace treeq::env {

enum class World { Shop, Book };

std::string to_string(World w);
World world_from_string(const std::string& s);

enum class ObsKind { UserQuery, Page };
enum class Role { Button, Link, TextInput, Option, Submit };

std::string to_string(Role r);
Role role_from_string(const std::string& s);

struct InteractiveElement {
  std::string element_id;
  Role role = Role::Button;
  std::string label;
  /// Autocomplete values offered by a TextInput. Empty for other roles.
  std::vector<std::string> suggestions;

  bool operator==(const InteractiveElement&) const = default;
};

struct Observation {
  ObsKind kind = ObsKind::Page;
  /// Task instruction for UserQuery; page summary text otherwise.
  std::string text;
  std::string page_id;
  std::vector<InteractiveElement> elements;
  std::string task_id;

  bool operator==(const Observation&) const = default;
};

/// Stable, byte-exact text form of an observation.
std::string canonical(const Observation& obs);

enum class Verb { Search, Click, Type, Next, Prev, Back, Buy, Submit, AskUser };

std::string to_string(Verb v);
Verb verb_from_string(const std::string& s);

struct EnvCommand {
  Verb verb = Verb::Click;
  std::optional<std::string> target;
  std::optional<std::string> payload;

  bool operator==(const EnvCommand&) const = default;
  auto operator<=>(const EnvCommand&) const = default;
};

/// Throws EnvError unless the verb/target/payload shape is legal.
void validate(const EnvCommand& cmd);
std::string canonical(const EnvCommand& cmd);
EnvCommand parse_command(const std::string& canonical_form);

/// Per-task layout parameters. Together with target_attributes they fully
/// determine the generated catalog or site.
struct TaskLayout {
  std::uint64_t seed = 0;
  int horizon = 15;
  // shopworld
  int page_size = 10;
  int catalog_size = 50;
  int result_count = 0;
  int target_rank = 0;
  // bookworld
  int start_stage = 0;

  bool operator==(const TaskLayout&) const = default;
};

struct TaskSpec {
  std::string task_id;
  World world = World::Shop;
  std::string goal_text;
  std::map<std::string, std::string> target_attributes;
  TaskLayout layout;

  bool operator==(const TaskSpec&) const = default;
};

/// Throws EnvError if required attributes or layout fields are missing or
/// out of range for the task's world.
void validate(const TaskSpec& task);

struct ShopConfig {
  int page_size = 10;
  int catalog_size = 50;
  int max_pages = 5;
  double p_deep = 0.5;
  int horizon = 15;
};

struct BookConfig {
  int horizon = 30;
  double p_city_change = 0.5;
  /// 0 starts at the landing page; 3 is the reduced variant starting at the
  /// party-size stage with earlier stages pre-filled.
  int start_stage = 0;
};

struct EnvConfig {
  ShopConfig shop;
  BookConfig book;
};

// ---------------------------------------------------------------- shopworld

struct Product {
  std::string id;
  std::string category;
  std::string color;
  std::string size;
  std::string price;
  int popularity = 0;

  std::string label() const;
  bool operator==(const Product&) const = default;
};

struct ShopCatalog {
  std::vector<Product> products;
};

ShopCatalog build_catalog(const TaskSpec& task);

/// Products matching the query's category keyword, ordered by popularity
/// (descending) then id.
std::vector<Product> search_results(std::span<const Product> catalog,
                                    const std::string& query);
int page_count(int result_count, int page_size);

/// One page of the deterministic relevance ordering. Throws EnvError when
/// the page is out of range.
std::vector<Product> shopworld_paginate(std::span<const Product> catalog,
                                        const std::string& query, int page,
                                        int page_size = 10);

// ---------------------------------------------------------------- bookworld

struct BookSite {
  std::vector<std::string> cities;
  std::map<std::string, std::vector<std::string>> restaurants_by_city;
  std::map<std::string, std::vector<std::string>> dates_by_restaurant;
  std::vector<std::string> times;
  std::vector<std::string> party_options;
  std::vector<std::string> seating;
  std::vector<std::string> search_suggestions;
  std::vector<std::string> name_suggestions;
  std::vector<std::string> phone_suggestions;
  std::vector<std::string> email_suggestions;
  std::string start_city;
};

BookSite build_site(const TaskSpec& task);

enum class BookPage {
  Landing,
  Location,
  SearchFilled,
  Results,
  Date,
  Time,
  FindTable,
  Party,
  Seating,
  Continue,
  Name,
  Phone,
  Email,
  Complete,
};

/// Stage index 0..5 of a booking page.
int stage_of(BookPage p);

// ---------------------------------------------------------------- state

struct ShopCursor {
  enum class Page { Landing, Results, Item };
  Page page = Page::Landing;
  int results_page = 0;
  std::string query;
  std::string item_id;
  std::string bought_id;

  bool operator==(const ShopCursor&) const = default;
};

struct BookCursor {
  BookPage page = BookPage::Landing;
  std::string city;
  std::string typed;
  std::string restaurant;
  std::string date;
  std::string time;
  std::string party;
  std::string seating;
  std::string name;
  std::string phone;
  std::string email;
  bool submitted = false;

  bool operator==(const BookCursor&) const = default;
};

/// Immutable data shared by every state of one episode.
struct WorldInstance {
  TaskSpec task;
  ShopCatalog catalog;
  BookSite site;
};

struct EnvState {
  std::shared_ptr<const WorldInstance> instance;
  std::variant<ShopCursor, BookCursor> cursor;
  int step_count = 0;
  bool terminal = false;
  std::uint64_t seed = 0;
  /// Error or notice shown on the next rendered page; cleared by any step.
  std::string banner;

  World world() const { return instance->task.world; }
  const TaskSpec& task() const { return instance->task; }
  int horizon() const { return instance->task.layout.horizon; }
};

struct StepResult {
  EnvState state;
  Observation observation;
  int reward = 0;
  bool terminal = false;
};

std::pair<EnvState, Observation> env_reset(World world, const TaskSpec& task,
                                           std::uint64_t seed);
StepResult env_step(const EnvState& state, const EnvCommand& cmd);

Observation render(const EnvState& state);

/// The finite set of well-formed commands offered by an observation's
/// interactive elements, in element order.
std::vector<EnvCommand> candidate_commands(const Observation& obs);

/// Success predicate evaluated on raw state; meaningful on terminal states.
bool success(const EnvState& state);

/// Full canonical state key (cursor, step count, banner excluded).
std::string state_key(const EnvState& state);

/// Coarser key under which states are equivalent for every future
/// success question: same offered commands and the same success-relevant
/// slot correctness. Used to memoize exact solvers.
std::string abstract_key(const EnvState& state);

/// Replays commands from reset and applies the success predicate. Throws
/// EnvError if the command sequence does not end in a terminal state.
int judge_commands(const TaskSpec& task, std::span<const EnvCommand> commands);

// ---------------------------------------------------------------- tasks

std::vector<TaskSpec> generate_task_set(World world, int count, std::uint64_t seed,
                                        const EnvConfig& config = {});

/// Split by index range: the first train_count tasks and the remainder.
std::pair<std::vector<TaskSpec>, std::vector<TaskSpec>> split_tasks(
    const std::vector<TaskSpec>& tasks, std::size_t train_count);

/// Attribute value tokens of a world, as they appear in goals and labels.
std::vector<std::string> attribute_vocabulary(World world);

}  // namespace treeq::env
