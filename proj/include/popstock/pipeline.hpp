#pragma once

#include <istream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "popstock/event_table.hpp"
#include "popstock/inference.hpp"
#include "popstock/ingest.hpp"
#include "popstock/parallel.hpp"
#include "popstock/regions.hpp"
#include "popstock/stocks.hpp"

namespace popstock {

/// Resolves a batch in parallel; output order matches input order.
inline std::vector<Resolution> resolve_batch(std::span<const GeoEvent> events, const RegionSet& set,
                                             const PlaceRegistry& places, int utc_offset_minutes,
                                             unsigned threads = 1) {
  std::vector<Resolution> out(events.size(), Unresolvable{UnresolvableReason::NoContainingRegion});
  const std::size_t n_tasks = std::max<std::size_t>(1, std::min<std::size_t>(events.size(), threads * 4u));
  parallel_for(n_tasks, threads, [&](std::size_t task) {
    const auto [begin, end] = chunk_range(events.size(), n_tasks, task);
    for (std::size_t i = begin; i < end; ++i)
      out[i] = resolve_event(events[i], set, places, utc_offset_minutes);
  });
  return out;
}

/// Appends resolved events to the table and tallies the rest.
inline void absorb(EventTable& table, IngestStats& stats, std::vector<Resolution>& batch) {
  for (auto& r : batch) {
    if (auto* e = std::get_if<ResolvedEvent>(&r)) {
      table.add(*e);
      ++stats.resolved;
    } else {
      ++stats.unresolvable;
      ++stats.by_reason[std::string(to_string(std::get<Unresolvable>(r).reason))];
    }
  }
}

struct IngestResult {
  EventTable table;
  IngestStats stats;
  std::vector<RecordError> errors;
};

/// Streams an events file through parse and resolve in fixed-size batches.
inline IngestResult ingest_events(std::istream& in, const RegionSet& set, const PlaceRegistry& places,
                                  int utc_offset_minutes, unsigned threads = 1,
                                  std::size_t batch_size = 1u << 16) {
  IngestResult result{EventTable(set), {}, {}};
  std::vector<GeoEvent> batch;
  batch.reserve(batch_size);
  const auto flush = [&] {
    auto resolved = resolve_batch(batch, set, places, utc_offset_minutes, threads);
    absorb(result.table, result.stats, resolved);
    batch.clear();
  };
  for_each_event(in, [&](ParsedRecord r) {
    if (auto* e = std::get_if<GeoEvent>(&r)) {
      batch.push_back(std::move(*e));
      if (batch.size() == batch_size) flush();
    } else {
      auto& err = std::get<RecordError>(r);
      ++result.stats.record_errors;
      ++result.stats.by_reason[std::string(to_string(err.kind))];
      result.errors.push_back(std::move(err));
    }
  });
  flush();
  return result;
}

}  // namespace popstock
