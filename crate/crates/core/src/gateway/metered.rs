use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ChatProvider, ChatRequest, ChatResponse, GatewayError};

/// Run-wide token allowance shared by every worker.
#[derive(Debug)]
pub struct TokenBudget {
    limit: u64,
    used: AtomicU64,
}

impl TokenBudget {
    pub fn new(limit: u64) -> Arc<Self> {
        Arc::new(Self { limit, used: AtomicU64::new(0) })
    }

    pub fn used(&self) -> u64 {
        self.used.load(Ordering::SeqCst)
    }

    pub fn exhausted(&self) -> bool {
        self.used() >= self.limit
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageTotals {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Counts calls and tokens, and refuses calls once a budget is spent.
pub struct MeteredProvider {
    inner: Arc<dyn ChatProvider>,
    budget: Option<Arc<TokenBudget>>,
    calls: AtomicU64,
    input: AtomicU64,
    output: AtomicU64,
}

impl MeteredProvider {
    pub fn new(inner: Arc<dyn ChatProvider>, budget: Option<Arc<TokenBudget>>) -> Self {
        Self { inner, budget, calls: AtomicU64::new(0), input: AtomicU64::new(0), output: AtomicU64::new(0) }
    }

    pub fn totals(&self) -> UsageTotals {
        UsageTotals {
            calls: self.calls.load(Ordering::SeqCst),
            input_tokens: self.input.load(Ordering::SeqCst),
            output_tokens: self.output.load(Ordering::SeqCst),
        }
    }
}

impl ChatProvider for MeteredProvider {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        if let Some(budget) = &self.budget {
            if budget.exhausted() {
                return Err(GatewayError::BudgetExhausted { limit: budget.limit });
            }
        }
        let response = self.inner.complete(request)?;
        let spent = response.usage.input_tokens + response.usage.output_tokens;
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.input.fetch_add(response.usage.input_tokens, Ordering::SeqCst);
        self.output.fetch_add(response.usage.output_tokens, Ordering::SeqCst);
        if let Some(budget) = &self.budget {
            budget.used.fetch_add(spent, Ordering::SeqCst);
        }
        Ok(response)
    }
}
