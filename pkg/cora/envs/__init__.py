"""Matrix and differential cooperative games."""
