#pragma once

#include <vector>

namespace cdqn {

/// One supplier's hourly offer: a quantity and an asking price. Rational bids
/// lie within the hour's [grid sell, grid buy] band (the environment's
/// feasibility masks enforce that); the clearing itself accepts any bid and
/// clamps the uniform price into the band.
struct Offer {
  int supplier_id = 0;
  double quantity_kwh = 0;
  double bid = 0;  // $/kWh
};

/// Per-supplier outcome, reported in the order the offers were submitted.
struct SupplierDispatch {
  int supplier_id = 0;
  double in_mg_kwh = 0;
  double to_grid_kwh = 0;
  double avg_sell_price = 0;  // quantity-weighted over in-MG and grid sales
};

struct ClearingResult {
  double clearing_price = 0;       // uniform price for all in-MG energy
  std::vector<SupplierDispatch> dispatch;
  double grid_import_kwh = 0;      // bought from the main grid to cover deficit
  double consumer_price = 0;       // $/kWh paid per kWh consumed (== clearing_price)

  double total_export_kwh() const {
    double e = 0;
    for (const auto& d : dispatch) e += d.to_grid_kwh;
    return e;
  }
};

/// Uniform-price merit-order clearing. Offers are ranked by ascending bid
/// (ties by ascending supplier_id) and dispatched in-MG until demand is met.
/// With surplus supply the marginal supplier's bid sets the clearing price and
/// every residual kWh is exported at grid_sell; with a deficit the main grid
/// covers it and grid_buy is the clearing price for all suppliers. Zero demand
/// clears at grid_sell with all supply exported.
ClearingResult clear_market(const std::vector<Offer>& offers, double total_demand_kwh,
                            double grid_buy, double grid_sell);

}  // namespace cdqn
