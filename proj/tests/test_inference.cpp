#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "popstock/inference.hpp"
#include "popstock/pipeline.hpp"

using namespace popstock;

namespace {

const RegionCode A = RegionCode::make("45079");
const RegionCode B = RegionCode::make("45063");
const RegionCode FR = RegionCode::make("FR");

const StudyWindow kYear = StudyWindow::calendar_year(2017);

ResolvedEvent ev(const RegionCode& r, int day_of_year, const std::string& user = "u1") {
  return {user, r, kYear.start + (day_of_year - 1), 0};
}

UserLocationHistogram hist(std::initializer_list<std::pair<RegionCode, std::int64_t>> counts) {
  UserLocationHistogram h{"u", kYear, {}, 0};
  for (auto [r, n] : counts) {
    h.counts[r] = n;
    h.total += n;
  }
  return h;
}

// Naive argmax over a plain vector, written without decide_mode.
std::optional<std::size_t> brute_argmax(const std::vector<std::int64_t>& c) {
  std::int64_t total = 0, best = -1;
  for (auto n : c) {
    total += n;
    best = std::max(best, n);
  }
  if (total < 2) return std::nullopt;
  std::vector<std::size_t> at;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c[i] == best) at.push_back(i);
  if (at.size() != 1) return std::nullopt;
  return at[0];
}

}  // namespace

TEST(Collapse, Examples) {
  std::vector<ResolvedEvent> five(5, ev(A, 10));
  EXPECT_EQ(collapse_observations(five, kYear, 1).size(), 5u);

  std::vector<ResolvedEvent> week = {ev(A, 1), ev(A, 2), ev(A, 3), ev(B, 3)};
  EXPECT_EQ(collapse_observations(week, kYear, 7).size(), 2u);

  std::vector<ResolvedEvent> year = {ev(A, 5), ev(A, 100), ev(A, 300), ev(B, 6), ev(B, 200), ev(B, 365)};
  const auto obs = collapse_observations(year, kYear, 365);
  const auto h = build_histogram(obs, "u1", kYear);
  EXPECT_EQ(h.counts, (std::map<RegionCode, std::int64_t>{{A, 1}, {B, 1}}));
}

TEST(Collapse, OutOfWindowEventsIgnored) {
  const std::vector<ResolvedEvent> events = {{"u", A, Date::from_ymd(2016, 12, 31), 0},
                                             {"u", A, Date::from_ymd(2018, 1, 1), 0}, ev(A, 1)};
  EXPECT_EQ(collapse_observations(events, kYear, 1).size(), 1u);
}

TEST(Collapse, SandwichedBetweenOneAndDistinctRegions) {
  std::mt19937_64 rng(17);
  const RegionCode regions[] = {A, B, FR};
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<ResolvedEvent> events;
    const int n = static_cast<int>(rng() % 40);
    for (int i = 0; i < n; ++i) events.push_back(ev(regions[rng() % 3], 1 + static_cast<int>(rng() % 365)));
    const int n_days = 1 + static_cast<int>(rng() % 60);
    const auto obs = collapse_observations(events, kYear, n_days);
    // Brute-force: distinct (region, bucket) pairs via a set.
    std::set<std::pair<std::string, int>> pairs;
    std::set<std::string> distinct;
    for (const auto& e : events) {
      pairs.insert({e.region.str(), (e.local_date - kYear.start) / n_days});
      distinct.insert(e.region.str());
    }
    EXPECT_EQ(obs.size(), n_days == 1 ? events.size() : pairs.size());
    EXPECT_LE(obs.size(), events.size());
    EXPECT_GE(obs.size(), distinct.size());
  }
}

TEST(Histogram, Examples) {
  std::vector<Observation> obs = {{A}, {A}, {A}, {B}};
  auto h = build_histogram(obs, "u", kYear);
  EXPECT_EQ(h.counts, (std::map<RegionCode, std::int64_t>{{A, 3}, {B, 1}}));
  EXPECT_EQ(h.total, 4);

  h = build_histogram({}, "u", kYear);
  EXPECT_TRUE(h.counts.empty());
  EXPECT_EQ(h.total, 0);

  obs = {{FR}, {FR}, {A}};
  h = build_histogram(obs, "u", kYear);
  EXPECT_EQ(h.counts, (std::map<RegionCode, std::int64_t>{{FR, 2}, {A, 1}}));
  EXPECT_EQ(h.total, 3);
}

TEST(Histogram, MergeCommutesAndRejectsMismatch) {
  const auto a = hist({{A, 2}, {B, 1}});
  const auto b = hist({{B, 4}, {FR, 1}});
  const auto ab = merge_histograms(a, b), ba = merge_histograms(b, a);
  EXPECT_EQ(ab.counts, ba.counts);
  EXPECT_EQ(ab.total, 8);
  auto other = b;
  other.user_id = "v";
  EXPECT_THROW(merge_histograms(a, other), Error);
}

TEST(InferHome, Examples) {
  auto h = infer_home(hist({{A, 3}, {B, 1}}));
  ASSERT_TRUE(h.is_resident());
  EXPECT_EQ(*h.home(), A);
  EXPECT_EQ(h.mode_count, 3);

  h = infer_home(hist({{A, 2}, {B, 2}}));
  EXPECT_EQ(h.status, (decltype(h.status){UnknownHome{UnknownReason::TiedMode}}));

  h = infer_home(hist({{A, 1}}));
  EXPECT_EQ(h.status, (decltype(h.status){UnknownHome{UnknownReason::InsufficientHistory}}));

  h = infer_home(hist({}));
  EXPECT_FALSE(h.is_resident());
}

TEST(InferHome, RandomHistogramsAgreeWithBruteForce) {
  std::mt19937_64 rng(42);
  std::vector<RegionCode> pool;
  for (int i = 0; i < 8; ++i) pool.push_back(RegionCode::make(std::to_string(45001 + 2 * i)));
  for (int trial = 0; trial < 2000; ++trial) {
    UserLocationHistogram h{"u", kYear, {}, 0};
    std::vector<std::int64_t> plain;
    std::vector<RegionCode> keys;
    for (const auto& r : pool) {
      if (rng() % 3 == 0) continue;
      const auto n = static_cast<std::int64_t>(1 + rng() % 5);
      h.counts[r] = n;
      h.total += n;
      plain.push_back(n);
      keys.push_back(r);
    }
    const auto got = infer_home(h);
    const auto want = brute_argmax(plain);
    ASSERT_EQ(got.is_resident(), want.has_value());
    if (want) {
      EXPECT_EQ(*got.home(), keys[*want]);
    }
  }
}

TEST(InferHome, PermutationInvariantAndDominance) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ResolvedEvent> events;
    const int n = 2 + static_cast<int>(rng() % 20);
    for (int i = 0; i < n; ++i)
      events.push_back(ev(rng() % 2 ? A : (rng() % 2 ? B : FR), 1 + static_cast<int>(rng() % 365)));
    const auto verdict = [&](const std::vector<ResolvedEvent>& es) {
      return infer_home(build_histogram(collapse_observations(es, kYear, 1), "u1", kYear));
    };
    const auto base = verdict(events);
    auto shuffled = events;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(verdict(shuffled), base);
    // Adding an observation to the home keeps it home.
    if (base.is_resident()) {
      auto more = events;
      more.push_back(ev(*base.home(), 200));
      EXPECT_EQ(*verdict(more).home(), *base.home());
    }
  }
}

TEST(InferHomes, CompactPathMatchesHistogramPath) {
  std::mt19937_64 rng(23);
  const auto set = RegionSet({square_region("45079", 0, 0, 1), square_region("45063", 1, 0, 1),
                              square_region("45019", 2, 0, 1)});
  std::vector<ResolvedEvent> events;
  for (int i = 0; i < 3000; ++i)
    events.push_back(ev(set[rng() % 3].code, 1 + static_cast<int>(rng() % 365), "u" + std::to_string(rng() % 200)));
  EventTable table(set);
  for (const auto& e : events) table.add(e);
  const auto groups = group_by_user(table);
  for (int n_days : {1, 7, 30}) {
    const auto compact = to_assignments(table, infer_homes(table, groups, kYear, n_days, 3));
    std::map<std::string, std::vector<ResolvedEvent>> by_user;
    for (const auto& e : events) by_user[e.user_id].push_back(e);
    ASSERT_EQ(compact.size(), by_user.size());
    std::size_t i = 0;
    for (const auto& [user, es] : by_user) {
      auto want = infer_home(build_histogram(collapse_observations(es, kYear, n_days), user, kYear));
      EXPECT_EQ(compact[i++], want) << user;
    }
  }
}

TEST(InferHomes, NaiveRecountOfModeCounts) {
  EventTable table;
  const std::vector<ResolvedEvent> events = {ev(A, 1, "a"), ev(A, 1, "a"), ev(B, 2, "a"),
                                             ev(FR, 3, "b"), ev(A, 4, "b"), ev(B, 5, "c")};
  for (const auto& e : events) table.add(e);
  const auto homes = to_assignments(table, infer_homes(table, group_by_user(table), kYear));
  ASSERT_EQ(homes.size(), 3u);
  EXPECT_EQ(*homes[0].home(), A);
  EXPECT_EQ(homes[0].mode_count, 2);
  EXPECT_EQ(homes[0].total_observations, 3);
  EXPECT_EQ(std::get<UnknownHome>(homes[1].status).reason, UnknownReason::TiedMode);
  EXPECT_EQ(std::get<UnknownHome>(homes[2].status).reason, UnknownReason::InsufficientHistory);
}

TEST(Window, TrailingAndCalendarYear) {
  const auto w = StudyWindow::trailing(Date::from_ymd(2017, 8, 21), 365);
  EXPECT_EQ(w.end.iso(), "2017-08-20");
  EXPECT_EQ(w.days(), 365);
  EXPECT_EQ(StudyWindow::calendar_year(2016).days(), 366);
  EXPECT_THROW(StudyWindow(Date::from_ymd(2017, 2, 1), Date::from_ymd(2017, 1, 1)), Error);
}

TEST(HomesCsv, RoundTrip) {
  const std::vector<HomeAssignment> homes = {
      {"a", Resident{A}, 3, 4}, {"b", UnknownHome{UnknownReason::TiedMode}, 2, 4},
      {"c", UnknownHome{UnknownReason::InsufficientHistory}, 1, 1}};
  std::stringstream s;
  write_homes(s, homes);
  EXPECT_EQ(read_homes(s), homes);
}
