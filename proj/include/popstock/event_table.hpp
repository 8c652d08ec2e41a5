#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "popstock/date.hpp"
#include "popstock/ingest.hpp"
#include "popstock/regions.hpp"

namespace popstock {

struct CompactEvent {
  std::uint32_t user;
  std::uint32_t region;
  std::int32_t day;  // local date, days since epoch
};

/// Resolved events with interned user ids and region codes. Ids are dense
/// and assigned in first-seen order; seeding from a RegionSet makes region
/// ids equal to RegionSet indices.
class EventTable {
 public:
  EventTable() = default;

  explicit EventTable(const RegionSet& set) {
    for (const auto& r : set.regions()) intern_region(r.code);
  }

  std::uint32_t intern_user(const std::string& user_id) {
    auto [it, inserted] = user_ids_.try_emplace(user_id, static_cast<std::uint32_t>(users_.size()));
    if (inserted) users_.push_back(user_id);
    return it->second;
  }

  std::uint32_t intern_region(const RegionCode& code) {
    auto [it, inserted] = region_ids_.try_emplace(code, static_cast<std::uint32_t>(regions_.size()));
    if (inserted) regions_.push_back(code);
    return it->second;
  }

  const std::uint32_t* find_user(const std::string& user_id) const {
    auto it = user_ids_.find(user_id);
    return it == user_ids_.end() ? nullptr : &it->second;
  }

  const std::uint32_t* find_region(const RegionCode& code) const {
    auto it = region_ids_.find(code);
    return it == region_ids_.end() ? nullptr : &it->second;
  }

  void add(const ResolvedEvent& e) {
    events_.push_back({intern_user(e.user_id), intern_region(e.region), e.local_date.days()});
  }

  void add(std::uint32_t user, std::uint32_t region, Date day) {
    events_.push_back({user, region, day.days()});
  }

  void reserve(std::size_t n) { events_.reserve(n); }

  std::span<const CompactEvent> events() const noexcept { return events_; }
  const std::vector<std::string>& users() const noexcept { return users_; }
  const std::vector<RegionCode>& regions() const noexcept { return regions_; }
  std::size_t size() const noexcept { return events_.size(); }

 private:
  std::vector<std::string> users_;
  std::unordered_map<std::string, std::uint32_t> user_ids_;
  std::vector<RegionCode> regions_;
  std::unordered_map<RegionCode, std::uint32_t> region_ids_;
  std::vector<CompactEvent> events_;
};

/// CSR grouping of event indices by user, input order preserved within a
/// user.
struct UserGroups {
  std::vector<std::size_t> offsets;  // users + 1 entries
  std::vector<std::uint32_t> order;

  std::size_t users() const noexcept { return offsets.empty() ? 0 : offsets.size() - 1; }

  std::span<const std::uint32_t> events_of(std::size_t user) const {
    return std::span(order).subspan(offsets[user], offsets[user + 1] - offsets[user]);
  }
};

inline UserGroups group_by_user(const EventTable& table) {
  UserGroups g;
  const auto n_users = table.users().size();
  g.offsets.assign(n_users + 1, 0);
  for (const auto& e : table.events()) ++g.offsets[e.user + 1];
  for (std::size_t u = 0; u < n_users; ++u) g.offsets[u + 1] += g.offsets[u];
  g.order.resize(table.size());
  std::vector<std::size_t> cursor(g.offsets.begin(), g.offsets.end() - 1);
  const auto events = table.events();
  for (std::size_t i = 0; i < events.size(); ++i)
    g.order[cursor[events[i].user]++] = static_cast<std::uint32_t>(i);
  return g;
}

}  // namespace popstock
