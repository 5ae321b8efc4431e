# Test package for PnPKit
