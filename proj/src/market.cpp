#include "cdqn/market.hpp"

#include <algorithm>
#include <numeric>

#include "cdqn/util.hpp"

namespace cdqn {

ClearingResult clear_market(const std::vector<Offer>& offers, double total_demand_kwh,
                            double grid_buy, double grid_sell) {
  if (grid_sell > grid_buy) throw ContractViolation("clear_market: grid_sell > grid_buy");
  if (total_demand_kwh < 0) throw ContractViolation("clear_market: negative demand");
  for (const auto& o : offers)
    if (o.quantity_kwh <= 0) throw ContractViolation("clear_market: offer quantity must be > 0");

  ClearingResult res;
  res.dispatch.resize(offers.size());
  for (std::size_t i = 0; i < offers.size(); ++i)
    res.dispatch[i] = {offers[i].supplier_id, 0.0, 0.0, 0.0};

  std::vector<std::size_t> order(offers.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (offers[a].bid != offers[b].bid) return offers[a].bid < offers[b].bid;
    return offers[a].supplier_id < offers[b].supplier_id;
  });

  const double total_supply =
      std::accumulate(offers.begin(), offers.end(), 0.0,
                      [](double s, const Offer& o) { return s + o.quantity_kwh; });

  if (total_supply < total_demand_kwh) {
    // Deficit: the main grid joins as the marginal supplier at its buy price.
    res.clearing_price = grid_buy;
    res.grid_import_kwh = total_demand_kwh - total_supply;
    for (std::size_t i = 0; i < offers.size(); ++i) res.dispatch[i].in_mg_kwh = offers[i].quantity_kwh;
  } else if (total_demand_kwh == 0) {
    // Nothing to serve: all supply exports at the grid's buy-back price.
    res.clearing_price = grid_sell;
    for (std::size_t i = 0; i < offers.size(); ++i) res.dispatch[i].to_grid_kwh = offers[i].quantity_kwh;
  } else {
    double remaining = total_demand_kwh;
    for (std::size_t k : order) {
      const double take = std::min(remaining, offers[k].quantity_kwh);
      res.dispatch[k].in_mg_kwh = take;
      res.dispatch[k].to_grid_kwh = offers[k].quantity_kwh - take;
      if (take > 0) res.clearing_price = offers[k].bid;  // marginal supplier so far
      remaining -= take;
    }
    // The grid's prices bound the uniform price: nobody sells in-MG below
    // the buy-back price or pays more than the grid would charge.
    res.clearing_price = std::clamp(res.clearing_price, grid_sell, grid_buy);
  }

  for (std::size_t i = 0; i < offers.size(); ++i) {
    auto& d = res.dispatch[i];
    d.avg_sell_price = (d.in_mg_kwh * res.clearing_price + d.to_grid_kwh * grid_sell) / offers[i].quantity_kwh;
  }
  res.consumer_price = res.clearing_price;
  return res;
}

}  // namespace cdqn
