#pragma once

#include <utility>
#include <vector>

#include "aio/params.hpp"
#include "aio/tensor.hpp"

namespace aio {

// Recurrent state after consuming a label prefix. A pure function of the
// prefix; hypotheses copy it freely and never share an instance.
struct PredictorState {
  std::vector<Tensor> h;  // one [D''] vector per layer
  int u = 0;              // consumed prefix length
};

PredictorState predictor_start(const PredictorP& pred, const ModelDims& dims);

// Consumes prev_label (kStartSymbol for the first row, otherwise a label id)
// and returns the next output row along with the advanced state. The output
// depends only on the label prefix, never on acoustics.
std::pair<Tensor, PredictorState> predict(int prev_label,
                                          const PredictorState& state,
                                          const PredictorP& pred,
                                          const ModelDims& dims);

inline std::pair<Tensor, PredictorState> predict(int prev_label,
                                                 const PredictorState& state,
                                                 const AioParams& p) {
  return predict(prev_label, state, p.pred, p.dims);
}

inline PredictorState predictor_start(const AioParams& p) {
  return predictor_start(p.pred, p.dims);
}

// Tape version for training: rows 0..U for targets y (length U), where row u
// encodes the prefix y_1..y_u. Arithmetic matches predict() bit for bit.
Var predictor_rows_graph(const std::vector<int>& y, const PredictorP& pred,
                         const ModelDims& dims);

}  // namespace aio
