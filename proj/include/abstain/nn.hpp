#pragma once

#include "abstain/nn/checkpoint.hpp"
#include "abstain/nn/encoder.hpp"
#include "abstain/nn/loss.hpp"
#include "abstain/nn/mlp.hpp"
#include "abstain/nn/optimizer.hpp"
#include "abstain/nn/params.hpp"
